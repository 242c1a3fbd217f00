#include "spn/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <sstream>

namespace spn {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'N', 'F'};
constexpr std::streamoff kHeaderBytes = 22;  // magic + u16 version + u64 d + u64 n

template <typename T>
void write_le(std::ostream& out, T value) {
    auto u = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(u.begin(), u.end());
    }
    out.write(reinterpret_cast<const char*>(u.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> u;
    in.read(reinterpret_cast<char*>(u.data()), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(u.begin(), u.end());
    }
    return std::bit_cast<T>(u);
}

void expect(bool ok, const std::string& message) {
    if (!ok) throw IoError(message);
}

int pnm_token(std::istream& in) {
    // next integer token, skipping whitespace and '#' comments
    while (true) {
        const int c = in.peek();
        if (c == EOF) throw IoError("pnm: truncated header");
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        break;
    }
    int value = 0;
    expect(static_cast<bool>(in >> value), "pnm: malformed header token");
    return value;
}

}  // namespace

void write_spnf(const std::filesystem::path& path, const FingerprintMatrix& m) {
    m.validate();
    std::ofstream out(path, std::ios::binary);
    expect(static_cast<bool>(out), "spnf: cannot open for writing: " + path.string());

    out.write(kMagic, 4);
    write_le<std::uint16_t>(out, kSpnfVersion);
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.dim()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.count()));
    for (Eigen::Index j = 0; j < m.count(); ++j) {
        for (Eigen::Index i = 0; i < m.dim(); ++i) {
            write_le<float>(out, static_cast<float>(m.data(i, j)));
        }
    }
    for (const auto& id : m.ids) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    expect(static_cast<bool>(out), "spnf: write failed: " + path.string());
}

FingerprintMatrix read_spnf(const std::filesystem::path& path) {
    SpnfReader reader(path);
    FingerprintMatrix m;
    m.data.resize(reader.dim(), reader.count());
    for (int j = 0; j < reader.count(); ++j) m.data.col(j) = reader.column(j);
    m.ids = reader.ids();
    m.validate();
    return m;
}

SpnfReader::SpnfReader(const std::filesystem::path& path)
    : file_(path, std::ios::binary) {
    expect(static_cast<bool>(file_), "spnf: cannot open: " + path.string());
    char magic[4];
    file_.read(magic, 4);
    expect(file_.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
           "spnf: bad magic: " + path.string());
    const auto version = read_le<std::uint16_t>(file_);
    expect(version == kSpnfVersion, "spnf: unsupported format version");
    const auto d = read_le<std::uint64_t>(file_);
    const auto n = read_le<std::uint64_t>(file_);
    expect(static_cast<bool>(file_), "spnf: truncated header");
    expect(d > 0 && n <= std::numeric_limits<int>::max(), "spnf: implausible dimensions");
    d_ = static_cast<Eigen::Index>(d);
    n_ = static_cast<int>(n);

    file_.seekg(kHeaderBytes + static_cast<std::streamoff>(d) * static_cast<std::streamoff>(n) * 4,
                std::ios::beg);
    ids_.reserve(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) {
        const auto len = read_le<std::uint32_t>(file_);
        expect(static_cast<bool>(file_), "spnf: truncated id table");
        std::string id(len, '\0');
        file_.read(id.data(), static_cast<std::streamsize>(len));
        expect(static_cast<bool>(file_), "spnf: truncated id table");
        ids_.push_back(std::move(id));
    }
}

Eigen::VectorXd SpnfReader::column(int index) const {
    if (index < 0 || index >= n_) throw IoError("spnf: column index out of range");
    file_.clear();
    file_.seekg(kHeaderBytes + static_cast<std::streamoff>(index) * d_ * 4, std::ios::beg);
    Eigen::VectorXd col(d_);
    std::vector<unsigned char> buf(static_cast<std::size_t>(d_) * 4);
    file_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    expect(static_cast<bool>(file_), "spnf: truncated column data");
    for (Eigen::Index i = 0; i < d_; ++i) {
        std::array<unsigned char, 4> word;
        std::copy_n(buf.data() + i * 4, 4, word.begin());
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(word.begin(), word.end());
        }
        col[i] = static_cast<double>(std::bit_cast<float>(word));
    }
    return col;
}

Eigen::MatrixXd FileFingerprintStore::load_columns(std::span<const int> indices) const {
    Eigen::MatrixXd out(reader_.dim(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = reader_.column(indices[i]);
    }
    return out;
}

MultiFileFingerprintStore::MultiFileFingerprintStore(
    const std::vector<std::filesystem::path>& paths) {
    expect(!paths.empty(), "spnf: no input files");
    for (const auto& path : paths) {
        SpnfReader reader(path);
        if (readers_.empty()) {
            dim_ = reader.dim();
        } else {
            expect(reader.dim() == dim_,
                   "spnf: dimension mismatch across input files: " + path.string());
        }
        first_index_.push_back(static_cast<int>(ids_.size()));
        ids_.insert(ids_.end(), reader.ids().begin(), reader.ids().end());
        readers_.push_back(std::move(reader));
    }
    std::vector<std::string> sorted = ids_;
    std::sort(sorted.begin(), sorted.end());
    expect(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
           "spnf: duplicate ids across input files");
}

Eigen::MatrixXd MultiFileFingerprintStore::load_columns(std::span<const int> indices) const {
    Eigen::MatrixXd out(dim_, static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int global = indices[i];
        const auto file = static_cast<std::size_t>(
            std::upper_bound(first_index_.begin(), first_index_.end(), global) -
            first_index_.begin() - 1);
        out.col(static_cast<Eigen::Index>(i)) =
            readers_[file].column(global - first_index_[file]);
    }
    return out;
}

void write_label_table(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ofstream out(path);
    expect(static_cast<bool>(out), "labels: cannot open for writing: " + path.string());
    for (const auto& [id, label] : rows) out << id << ',' << label << '\n';
    expect(static_cast<bool>(out), "labels: write failed: " + path.string());
}

std::vector<std::pair<std::string, std::string>> read_label_table(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    expect(static_cast<bool>(in), "labels: cannot open: " + path.string());
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        expect(comma != std::string::npos, "labels: malformed line: " + line);
        rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
    }
    return rows;
}

void write_result(const std::filesystem::path& path, const std::vector<std::string>& ids,
                  const ClusteringResult& result) {
    expect(ids.size() == result.labels.size(), "result: id/label size mismatch");
    std::ofstream out(path);
    expect(static_cast<bool>(out), "result: cannot open for writing: " + path.string());
    out << "num_clusters," << result.num_clusters << '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i] << ',';
        if (result.labels[i] == kUnclustered) {
            out << "unclustered";
        } else {
            out << result.labels[i];
        }
        out << '\n';
    }
    expect(static_cast<bool>(out), "result: write failed: " + path.string());
}

std::pair<std::vector<std::string>, ClusteringResult> read_result(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    expect(static_cast<bool>(in), "result: cannot open: " + path.string());
    std::string line;
    expect(static_cast<bool>(std::getline(in, line)), "result: empty file");
    expect(line.rfind("num_clusters,", 0) == 0, "result: missing num_clusters header");

    ClusteringResult result;
    result.num_clusters = std::stoi(line.substr(std::strlen("num_clusters,")));
    std::vector<std::string> ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        expect(comma != std::string::npos, "result: malformed line: " + line);
        ids.push_back(line.substr(0, comma));
        const std::string label = line.substr(comma + 1);
        if (label == "unclustered") {
            result.labels.push_back(kUnclustered);
        } else {
            result.labels.push_back(std::stoi(label));
        }
    }
    result.validate();
    return {std::move(ids), std::move(result)};
}

RawImage read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    expect(static_cast<bool>(in), "pnm: cannot open: " + path.string());
    char p = 0;
    char kind = 0;
    in.get(p).get(kind);
    expect(p == 'P' && (kind == '5' || kind == '6'), "pnm: only binary P5/P6 supported");

    const int width = pnm_token(in);
    const int height = pnm_token(in);
    const int maxval = pnm_token(in);
    expect(width > 0 && height > 0, "pnm: bad dimensions");
    expect(maxval == 255, "pnm: only 8-bit rasters supported");
    in.get();  // single whitespace before raster data

    const int channels = kind == '5' ? 1 : 3;
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    expect(static_cast<bool>(in), "pnm: truncated raster data: " + path.string());

    RawImage img;
    for (int c = 0; c < channels; ++c) img.channels.emplace_back(height, width);
    std::size_t pos = 0;
    for (int r = 0; r < height; ++r) {
        for (int col = 0; col < width; ++col) {
            for (int c = 0; c < channels; ++c) {
                img.channels[static_cast<std::size_t>(c)](r, col) = raw[pos++] / 255.0;
            }
        }
    }
    return img;
}

void write_pnm(const std::filesystem::path& path, const RawImage& img) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    expect(static_cast<bool>(out), "pnm: cannot open for writing: " + path.string());
    const int channels = img.num_channels();
    out << (channels == 1 ? "P5" : "P6") << '\n'
        << img.width() << ' ' << img.height() << '\n'
        << 255 << '\n';
    for (Eigen::Index r = 0; r < img.height(); ++r) {
        for (Eigen::Index col = 0; col < img.width(); ++col) {
            for (int c = 0; c < channels; ++c) {
                const double v = img.channels[static_cast<std::size_t>(c)](r, col);
                out.put(static_cast<char>(
                    static_cast<unsigned char>(std::lround(v * 255.0))));
            }
        }
    }
    expect(static_cast<bool>(out), "pnm: write failed: " + path.string());
}

}  // namespace spn
