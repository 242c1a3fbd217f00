#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "spn/fingerprint.hpp"
#include "spn/largescale.hpp"
#include "spn/spectral.hpp"

namespace spn {

// SPNF fingerprint container: magic "SPNF", u16 format version, u64 d,
// u64 n, then n columns of d little-endian float32 values (column-major),
// then n id strings each prefixed by a u32 little-endian byte length.
inline constexpr std::uint16_t kSpnfVersion = 1;

void write_spnf(const std::filesystem::path& path, const FingerprintMatrix& m);
FingerprintMatrix read_spnf(const std::filesystem::path& path);

// Random-access SPNF reader; backs the file store so only requested
// columns are materialized.
class SpnfReader {
public:
    explicit SpnfReader(const std::filesystem::path& path);

    Eigen::Index dim() const { return d_; }
    int count() const { return n_; }
    const std::vector<std::string>& ids() const { return ids_; }

    Eigen::VectorXd column(int index) const;

private:
    mutable std::ifstream file_;
    Eigen::Index d_ = 0;
    int n_ = 0;
    std::vector<std::string> ids_;
};

class FileFingerprintStore final : public FingerprintStore {
public:
    explicit FileFingerprintStore(const std::filesystem::path& path) : reader_(path) {}

    Eigen::Index dim() const override { return reader_.dim(); }
    int count() const override { return reader_.count(); }
    const std::vector<std::string>& ids() const override { return reader_.ids(); }

protected:
    Eigen::MatrixXd load_columns(std::span<const int> indices) const override;

private:
    SpnfReader reader_;
};

// Several SPNF files (e.g. one per extraction batch) presented as one
// store; all files must share the fingerprint dimension and ids must be
// unique across files.
class MultiFileFingerprintStore final : public FingerprintStore {
public:
    explicit MultiFileFingerprintStore(const std::vector<std::filesystem::path>& paths);

    Eigen::Index dim() const override { return dim_; }
    int count() const override { return static_cast<int>(ids_.size()); }
    const std::vector<std::string>& ids() const override { return ids_; }

protected:
    Eigen::MatrixXd load_columns(std::span<const int> indices) const override;

private:
    std::vector<SpnfReader> readers_;
    std::vector<int> first_index_;  // global index of each file's first column
    std::vector<std::string> ids_;
    Eigen::Index dim_ = 0;
};

// Ground-truth label table: one "id,label" line per item.
void write_label_table(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& rows);
std::vector<std::pair<std::string, std::string>> read_label_table(
    const std::filesystem::path& path);

// Clustering result record: a "num_clusters,<k>" header line followed by
// one "id,<cluster id|unclustered>" line per item, in input order.
void write_result(const std::filesystem::path& path, const std::vector<std::string>& ids,
                  const ClusteringResult& result);
std::pair<std::vector<std::string>, ClusteringResult> read_result(
    const std::filesystem::path& path);

// Binary PNM rasters (P5 grayscale, P6 RGB), maxval 255.
RawImage read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const RawImage& img);

}  // namespace spn
