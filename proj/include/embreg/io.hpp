// File formats: MetaImage (.mhd + raw payload) and the native .evol container.
//
// .evol layout (little endian):
//   "EVOL\0" | u16 version = 1 | u32 C, D, H, W | f32 spacing[3] | f32 origin[3]
//   | C*D*H*W f32 payload, channel-major, z-major within a channel.
// Spacing and origin are stored in (z, y, x) order. Scalar volumes use C = 1,
// displacement fields C = 3, embeddings C = channels.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "embreg/embedding.hpp"
#include "embreg/field.hpp"
#include "embreg/volume.hpp"

namespace embreg {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dispatches on extension: ".mhd" or ".evol".
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);

LabelVolume load_labels(const std::filesystem::path& path);
/// Labels are written as MET_UCHAR when every label fits in a byte, else MET_SHORT.
void save_labels(const LabelVolume& labels, const std::filesystem::path& path);

EmbeddingVolume load_embedding(const std::filesystem::path& path);
void save_embedding(const EmbeddingVolume& e, const std::filesystem::path& path);

DisplacementField load_field(const std::filesystem::path& path);
void save_field(const DisplacementField& f, const std::filesystem::path& path);

/// Raw .evol record, exposed for tools that do not care about channel meaning.
struct EvolRecord {
    int channels = 0;
    Dims dims{};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    std::vector<float> payload;
};

EvolRecord read_evol(const std::filesystem::path& path);
void write_evol(const EvolRecord& rec, const std::filesystem::path& path);

}  // namespace embreg
