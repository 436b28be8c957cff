#include "bodyfit/dataset.hpp"

#include <cstring>
#include <fstream>

#include "bodyfit/error.hpp"

namespace bodyfit {

namespace {

constexpr char kDatasetMagic[8] = {'B', 'F', 'P', 'O', 'S', 'E', 'D', '1'};
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

void PoseDataset::validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            records[i].validate();
        } catch (const Error& e) {
            throw Error(ErrorCode::data,
                        "dataset record " + std::to_string(i) + ": " + e.what());
        }
    }
}

void save_dataset(const PoseDataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    auto put = [&out](const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    };
    put(kDatasetMagic, sizeof(kDatasetMagic));
    put(&kDatasetVersion, 4);
    const std::uint32_t name_len = static_cast<std::uint32_t>(dataset.name.size());
    put(&name_len, 4);
    put(dataset.name.data(), name_len);
    put(&dataset.seed, 8);
    const std::uint64_t count = dataset.records.size();
    put(&count, 8);
    for (const PoseShape& r : dataset.records) {
        put(r.theta.data(), sizeof(double) * kThetaDim);
        put(r.beta.data(), sizeof(double) * kBetaDim);
    }
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

PoseDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    auto get = [&in, &path](void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n)) {
            throw Error(ErrorCode::data, path + ": truncated pose dataset");
        }
    };
    char magic[8];
    get(magic, sizeof(magic));
    if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) {
        throw Error(ErrorCode::data, path + ": not a pose dataset");
    }
    std::uint32_t version;
    get(&version, 4);
    if (version != kDatasetVersion) {
        throw Error(ErrorCode::data, path + ": unsupported dataset version");
    }
    PoseDataset d;
    std::uint32_t name_len;
    get(&name_len, 4);
    if (name_len > 4096) {
        throw Error(ErrorCode::data, path + ": implausible name length");
    }
    d.name.resize(name_len);
    if (name_len) get(d.name.data(), name_len);
    get(&d.seed, 8);
    std::uint64_t count;
    get(&count, 8);
    const std::uint64_t record_bytes = sizeof(double) * (kThetaDim + kBetaDim);
    const std::uint64_t header_bytes = 8 + 4 + 4 + name_len + 8 + 8;
    if (file_size < header_bytes ||
        (file_size - header_bytes) % record_bytes != 0 ||
        (file_size - header_bytes) / record_bytes != count) {
        throw Error(ErrorCode::data,
                    path + ": record count does not match the file size");
    }
    d.records.resize(count);
    for (PoseShape& r : d.records) {
        get(r.theta.data(), sizeof(double) * kThetaDim);
        get(r.beta.data(), sizeof(double) * kBetaDim);
    }
    d.validate();
    return d;
}

}  // namespace bodyfit
