#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "zsl/rng.hpp"
#include "zsl/tensor.hpp"

namespace zsl {

// Class-level semantic vectors, one row of M attributes per class.
class AttributeMatrix {
 public:
  AttributeMatrix() = default;
  AttributeMatrix(std::vector<int> class_ids, std::size_t num_attributes, std::vector<double> rows);

  std::size_t num_classes() const { return class_ids_.size(); }
  std::size_t num_attributes() const { return num_attributes_; }
  const std::vector<int>& class_ids() const { return class_ids_; }
  bool contains(int class_id) const { return index_.count(class_id) != 0; }
  std::size_t index_of(int class_id) const;
  std::span<const double> row(int class_id) const;
  std::span<double> mutable_row(int class_id);
  const std::vector<double>& data() const { return rows_; }

  // Every row needs a nonzero entry so cosine similarity is defined.
  void validate() const;

  bool operator==(const AttributeMatrix& other) const {
    return class_ids_ == other.class_ids_ && num_attributes_ == other.num_attributes_ && rows_ == other.rows_;
  }

 private:
  std::vector<int> class_ids_;
  std::size_t num_attributes_ = 0;
  std::vector<double> rows_;
  std::unordered_map<int, std::size_t> index_;
};

struct SplitSpec {
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
  std::vector<std::string> train_samples;
  std::vector<std::string> test_seen;
  std::vector<std::string> test_unseen;

  bool operator==(const SplitSpec&) const = default;
};

struct ImageRecord {
  std::string id;
  Tensor pixels;  // [H x W x C], values in [0, 1]
  std::optional<int> class_id;
};

// Published dataset geometry used to validate manifests that declare it.
struct DatasetShape {
  std::string name;
  std::size_t num_seen;
  std::size_t num_unseen;
  std::size_t num_attributes;
  std::size_t num_samples;

  std::size_t num_classes() const { return num_seen + num_unseen; }
};

// AWA2, CUB and SUN; nullopt for any other name.
std::optional<DatasetShape> known_dataset_shape(std::string_view name);

struct DatasetBundle {
  AttributeMatrix attributes;
  SplitSpec splits;
  std::vector<ImageRecord> images;
  std::optional<std::string> declared_shape;

  const ImageRecord& image(const std::string& id) const;
  bool has_image(const std::string& id) const { return index_.count(id) != 0; }
  bool is_seen(int class_id) const;
  // Rebuilds the id -> image lookup after images change.
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct LoadOptions {
  // Images are resized to image_size x image_size at ingestion.
  std::size_t image_size = 32;
};

// Checks SplitSpec invariants, attribute rows and image geometry; throws
// ValidationError listing every offender.
void validate_bundle(const DatasetBundle& bundle);

// Reads attributes.csv, splits.json, manifest.csv and images/<id>.ppm.
DatasetBundle load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});
void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& root);

// Every *.ppm under dir (sorted by name), resized, with no class label.
std::vector<ImageRecord> load_image_pool(const std::filesystem::path& dir, std::size_t image_size);

// Counter-clockwise rotation by 90 * quarter_turns degrees; quarter_turns in {0,1,2,3}.
// One step maps out[i][j][c] = in[j][H-1-i][c]. Requires a square image.
ImageRecord rotate(const ImageRecord& image, int quarter_turns);
Tensor rotate_pixels(const Tensor& pixels, int quarter_turns);

// ---------------------------------------------------------------------------
// Rotation-task source pools and mixed batches.

enum class PoolMode {
  kNone,  // rotation task disabled
  kSeen,
  kSeenAndUnseen,
  kExternal,
  kExternalAndUnseen,
  kExternalAndSeen,
};

std::string_view pool_mode_name(PoolMode mode);
// Accepts the names printed by pool_mode_name ("seen", "seen+unseen", ...).
PoolMode parse_pool_mode(std::string_view name);

struct RotationPoolSpec {
  PoolMode mode = PoolMode::kSeen;
  std::optional<std::filesystem::path> external_dir;
};

// Resolved source images for the rotation task. Records carry no class id.
struct RotationPool {
  PoolMode mode = PoolMode::kSeen;
  std::vector<ImageRecord> sources;
  std::size_t from_seen = 0;
  std::size_t from_unseen = 0;
  std::size_t from_external = 0;
};

// Seen sources are the train samples; unseen sources are the unseen test
// images (pixels only); external sources are loaded from external_dir.
RotationPool resolve_pool(const DatasetBundle& bundle, const RotationPoolSpec& spec, std::size_t image_size);

struct BatchGeometry {
  std::size_t labelled = 32;
  std::size_t rotation_sources = 8;  // each contributes 4 rotated copies
};

struct LabelledItem {
  std::string sample_id;
  Tensor pixels;
  std::vector<double> target;  // class attribute vector
};

struct RotatedItem {
  std::string source_id;
  Tensor pixels;
  int angle = 0;  // quarter turns
};

struct Batch {
  std::vector<LabelledItem> labelled;
  // Consecutive groups of 4: one source at angles 0, 1, 2, 3.
  std::vector<RotatedItem> rotated;
};

Batch build_batch(const DatasetBundle& bundle, const RotationPool& pool, const BatchGeometry& geometry, Rng& rng);

}  // namespace zsl
