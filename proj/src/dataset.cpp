#include "zsl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "zsl/errors.hpp"
#include "zsl/image.hpp"

namespace zsl {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// AttributeMatrix

AttributeMatrix::AttributeMatrix(std::vector<int> class_ids, std::size_t num_attributes, std::vector<double> rows)
    : class_ids_(std::move(class_ids)), num_attributes_(num_attributes), rows_(std::move(rows)) {
  if (num_attributes_ == 0) throw ValidationError("attribute matrix needs M >= 1");
  if (rows_.size() != class_ids_.size() * num_attributes_) {
    throw DimensionError("attribute matrix: " + std::to_string(rows_.size()) + " values for " +
                         std::to_string(class_ids_.size()) + " classes x " + std::to_string(num_attributes_));
  }
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    if (!index_.emplace(class_ids_[i], i).second) {
      throw ValidationError("attribute matrix: duplicate class id " + std::to_string(class_ids_[i]));
    }
  }
}

std::size_t AttributeMatrix::index_of(int class_id) const {
  auto it = index_.find(class_id);
  if (it == index_.end()) throw ValidationError("unknown class id " + std::to_string(class_id));
  return it->second;
}

std::span<const double> AttributeMatrix::row(int class_id) const {
  return std::span<const double>(rows_).subspan(index_of(class_id) * num_attributes_, num_attributes_);
}

std::span<double> AttributeMatrix::mutable_row(int class_id) {
  return std::span<double>(rows_).subspan(index_of(class_id) * num_attributes_, num_attributes_);
}

void AttributeMatrix::validate() const {
  std::vector<std::string> bad;
  for (int c : class_ids_) {
    auto r = row(c);
    if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; })) bad.push_back(std::to_string(c));
  }
  if (!bad.empty()) {
    std::string msg = "attribute rows with no nonzero entry (cosine undefined) for classes:";
    for (const auto& b : bad) msg += " " + b;
    throw ValidationError(msg);
  }
}

// ---------------------------------------------------------------------------
// Bundle

std::optional<DatasetShape> known_dataset_shape(std::string_view name) {
  if (name == "AWA2") return DatasetShape{"AWA2", 40, 10, 85, 37322};
  if (name == "CUB") return DatasetShape{"CUB", 150, 50, 312, 11788};
  if (name == "SUN") return DatasetShape{"SUN", 645, 72, 102, 14340};
  return std::nullopt;
}

const ImageRecord& DatasetBundle::image(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown sample id '" + id + "'");
  return images[it->second];
}

bool DatasetBundle::is_seen(int class_id) const {
  return std::find(splits.seen_classes.begin(), splits.seen_classes.end(), class_id) != splits.seen_classes.end();
}

void DatasetBundle::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!index_.emplace(images[i].id, i).second) throw ValidationError("duplicate sample id '" + images[i].id + "'");
  }
}

namespace {

class Offenders {
 public:
  void add(std::string what) {
    if (items_.size() < 20) items_.push_back(std::move(what));
    ++count_;
  }
  void raise_if_any(const std::string& context) const {
    if (count_ == 0) return;
    std::string msg = context + ": " + std::to_string(count_) + " problem(s)";
    for (const auto& s : items_) msg += "\n  - " + s;
    if (count_ > items_.size()) msg += "\n  - ...";
    throw ValidationError(msg);
  }

 private:
  std::vector<std::string> items_;
  std::size_t count_ = 0;
};

}  // namespace

void validate_bundle(const DatasetBundle& bundle) {
  Offenders bad;
  const auto& s = bundle.splits;
  const auto& attrs = bundle.attributes;

  std::set<int> seen(s.seen_classes.begin(), s.seen_classes.end());
  std::set<int> unseen(s.unseen_classes.begin(), s.unseen_classes.end());
  if (seen.size() != s.seen_classes.size()) bad.add("duplicate ids in seen_classes");
  if (unseen.size() != s.unseen_classes.size()) bad.add("duplicate ids in unseen_classes");
  for (int c : seen) {
    if (unseen.count(c)) bad.add("class " + std::to_string(c) + " is both seen and unseen");
  }
  for (int c : seen) {
    if (!attrs.contains(c)) bad.add("seen class " + std::to_string(c) + " has no attribute row");
  }
  for (int c : unseen) {
    if (!attrs.contains(c)) bad.add("unseen class " + std::to_string(c) + " has no attribute row");
  }
  for (int c : attrs.class_ids()) {
    if (!seen.count(c) && !unseen.count(c)) bad.add("class " + std::to_string(c) + " is in neither split");
  }
  if (seen.empty()) bad.add("no seen classes");

  auto check_list = [&](const std::vector<std::string>& ids, const char* list, const std::set<int>& allowed,
                        const char* allowed_name) {
    std::unordered_set<std::string> dup;
    for (const auto& id : ids) {
      if (!dup.insert(id).second) bad.add(std::string(list) + ": duplicate sample '" + id + "'");
      if (!bundle.has_image(id)) {
        bad.add(std::string(list) + ": unknown sample '" + id + "'");
        continue;
      }
      const auto& rec = bundle.image(id);
      if (!rec.class_id) {
        bad.add(std::string(list) + ": sample '" + id + "' has no class");
      } else if (!allowed.count(*rec.class_id)) {
        bad.add(std::string(list) + ": sample '" + id + "' belongs to class " + std::to_string(*rec.class_id) +
                ", not a " + allowed_name + " class");
      }
    }
  };
  check_list(s.train_samples, "train_samples", seen, "seen");
  check_list(s.test_seen, "test_seen", seen, "seen");
  check_list(s.test_unseen, "test_unseen", unseen, "unseen");
  {
    std::unordered_set<std::string> train(s.train_samples.begin(), s.train_samples.end());
    for (const auto& id : s.test_seen) {
      if (train.count(id)) bad.add("sample '" + id + "' is in both train_samples and test_seen");
    }
  }

  const Shape* geometry = nullptr;
  for (const auto& rec : bundle.images) {
    if (rec.class_id && !attrs.contains(*rec.class_id)) {
      bad.add("sample '" + rec.id + "' references unknown class " + std::to_string(*rec.class_id));
    }
    if (!rec.pixels.defined() || rec.pixels.dim() != 3) {
      bad.add("sample '" + rec.id + "' has no [H x W x C] pixels");
      continue;
    }
    if (rec.pixels.size(0) != rec.pixels.size(1)) bad.add("sample '" + rec.id + "' is not square");
    if (!geometry) {
      geometry = &rec.pixels.shape();
    } else if (rec.pixels.shape() != *geometry) {
      bad.add("sample '" + rec.id + "' has geometry " + shape_str(rec.pixels.shape()) + ", expected " +
              shape_str(*geometry));
    }
  }

  if (bundle.declared_shape) {
    auto shape = known_dataset_shape(*bundle.declared_shape);
    if (!shape) {
      bad.add("unknown declared dataset '" + *bundle.declared_shape + "'");
    } else {
      auto expect = [&](const char* what, std::size_t got, std::size_t want) {
        if (got != want) {
          bad.add(shape->name + " declares " + std::to_string(want) + " " + what + ", found " + std::to_string(got));
        }
      };
      expect("classes", attrs.num_classes(), shape->num_classes());
      expect("seen classes", s.seen_classes.size(), shape->num_seen);
      expect("unseen classes", s.unseen_classes.size(), shape->num_unseen);
      expect("attributes", attrs.num_attributes(), shape->num_attributes);
      expect("samples", bundle.images.size(), shape->num_samples);
    }
  }
  bad.raise_if_any("dataset validation failed");
  attrs.validate();
}

// ---------------------------------------------------------------------------
// Disk format

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ValidationError(where + ": cannot parse number '" + text + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

AttributeMatrix read_attributes(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  auto header = split_csv(line);
  if (header.size() != 2 || header[0] != "class_id") {
    throw ValidationError(path.string() + ": header must be 'class_id,<M>'");
  }
  const auto m = parse_number<std::size_t>(header[1], path.string() + " header");
  std::vector<int> ids;
  std::vector<double> rows;
  Offenders bad;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != m + 1) {
      bad.add(where + ": " + std::to_string(cells.size() - 1) + " attributes, header declares M=" + std::to_string(m));
      continue;
    }
    ids.push_back(parse_number<int>(cells[0], where));
    for (std::size_t i = 1; i <= m; ++i) rows.push_back(parse_number<double>(cells[i], where));
  }
  bad.raise_if_any("attribute file rejected");
  return AttributeMatrix(std::move(ids), m, std::move(rows));
}

template <typename T>
std::vector<T> json_array(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw ValidationError(std::string("splits.json: missing array '") + key + "'");
  return j[key].get<std::vector<T>>();
}

}  // namespace

DatasetBundle load_dataset(const fs::path& root, const LoadOptions& options) {
  if (!fs::is_directory(root)) throw IoError("dataset root " + root.string() + " is not a directory");
  DatasetBundle bundle;
  bundle.attributes = read_attributes(root / "attributes.csv");

  json splits;
  try {
    auto in = open_in(root / "splits.json");
    splits = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("splits.json: " + std::string(e.what()));
  }
  bundle.splits.seen_classes = json_array<int>(splits, "seen_classes");
  bundle.splits.unseen_classes = json_array<int>(splits, "unseen_classes");
  bundle.splits.train_samples = json_array<std::string>(splits, "train_samples");
  bundle.splits.test_seen = json_array<std::string>(splits, "test_seen");
  bundle.splits.test_unseen = json_array<std::string>(splits, "test_unseen");
  if (splits.contains("dataset")) bundle.declared_shape = splits["dataset"].get<std::string>();

  auto in = open_in(root / "images" / "manifest.csv");
  std::string line;
  std::getline(in, line);
  if (split_csv(line) != std::vector<std::string>{"sample_id", "class_id"}) {
    throw ValidationError("manifest.csv: header must be 'sample_id,class_id'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    const std::string where = "manifest.csv:" + std::to_string(lineno);
    if (cells.size() != 2) throw ValidationError(where + ": expected 2 columns");
    ImageRecord rec;
    rec.id = cells[0];
    rec.class_id = parse_number<int>(cells[1], where);
    rec.pixels = read_ppm(root / "images" / (rec.id + ".ppm"));
    if (rec.pixels.size(0) != options.image_size || rec.pixels.size(1) != options.image_size) {
      rec.pixels = resize_image(rec.pixels, options.image_size, options.image_size);
    }
    bundle.images.push_back(std::move(rec));
  }
  bundle.reindex();
  validate_bundle(bundle);
  return bundle;
}

void write_dataset(const DatasetBundle& bundle, const fs::path& root) {
  fs::create_directories(root / "images");
  {
    auto out = open_out(root / "attributes.csv");
    const auto& a = bundle.attributes;
    out << "class_id," << a.num_attributes() << "\n";
    for (int c : a.class_ids()) {
      out << c;
      for (double v : a.row(c)) out << ',' << format_double(v);
      out << "\n";
    }
  }
  {
    json j;
    j["seen_classes"] = bundle.splits.seen_classes;
    j["unseen_classes"] = bundle.splits.unseen_classes;
    j["train_samples"] = bundle.splits.train_samples;
    j["test_seen"] = bundle.splits.test_seen;
    j["test_unseen"] = bundle.splits.test_unseen;
    if (bundle.declared_shape) j["dataset"] = *bundle.declared_shape;
    auto out = open_out(root / "splits.json");
    out << j.dump(1) << "\n";
  }
  auto manifest = open_out(root / "images" / "manifest.csv");
  manifest << "sample_id,class_id\n";
  for (const auto& rec : bundle.images) {
    if (!rec.class_id) throw ValidationError("sample '" + rec.id + "' has no class; cannot write a labelled dataset");
    manifest << rec.id << ',' << *rec.class_id << "\n";
    write_ppm(root / "images" / (rec.id + ".ppm"), rec.pixels);
  }
}

std::vector<ImageRecord> load_image_pool(const fs::path& dir, std::size_t image_size) {
  if (!fs::is_directory(dir)) throw IoError("image pool " + dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageRecord> out;
  for (const auto& f : files) {
    ImageRecord rec;
    rec.id = "external:" + f.stem().string();
    rec.pixels = resize_image(read_ppm(f), image_size, image_size);
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotation

Tensor rotate_pixels(const Tensor& pixels, int quarter_turns) {
  if (quarter_turns < 0 || quarter_turns > 3) {
    throw ContractError("rotation label must be in {0,1,2,3}, got " + std::to_string(quarter_turns));
  }
  if (pixels.dim() != 3 || pixels.size(0) != pixels.size(1)) {
    throw DimensionError("rotation needs a square [H x W x C] image, got " + shape_str(pixels.shape()));
  }
  const std::size_t n = pixels.size(0), c = pixels.size(2);
  Tensor cur = pixels.clone();
  cur.set_requires_grad(false);
  for (int step = 0; step < quarter_turns; ++step) {
    Tensor next(pixels.shape());
    auto src = cur.values();
    auto dst = next.values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) dst[(i * n + j) * c + ch] = src[(j * n + (n - 1 - i)) * c + ch];
    cur = next;
  }
  return cur;
}

ImageRecord rotate(const ImageRecord& image, int quarter_turns) {
  return ImageRecord{image.id, rotate_pixels(image.pixels, quarter_turns), image.class_id};
}

// ---------------------------------------------------------------------------
// Pools and batches

std::string_view pool_mode_name(PoolMode mode) {
  switch (mode) {
    case PoolMode::kNone: return "none";
    case PoolMode::kSeen: return "seen";
    case PoolMode::kSeenAndUnseen: return "seen+unseen";
    case PoolMode::kExternal: return "external";
    case PoolMode::kExternalAndUnseen: return "external+unseen";
    case PoolMode::kExternalAndSeen: return "external+seen";
  }
  return "?";
}

PoolMode parse_pool_mode(std::string_view name) {
  for (PoolMode m : {PoolMode::kNone, PoolMode::kSeen, PoolMode::kSeenAndUnseen, PoolMode::kExternal,
                     PoolMode::kExternalAndUnseen, PoolMode::kExternalAndSeen}) {
    if (pool_mode_name(m) == name) return m;
  }
  throw ValidationError("unknown rotation pool '" + std::string(name) +
                        "' (expected none, seen, seen+unseen, external, external+unseen, external+seen)");
}

RotationPool resolve_pool(const DatasetBundle& bundle, const RotationPoolSpec& spec, std::size_t image_size) {
  RotationPool pool;
  pool.mode = spec.mode;
  if (spec.mode == PoolMode::kNone) return pool;
  const bool seen = spec.mode == PoolMode::kSeen || spec.mode == PoolMode::kSeenAndUnseen ||
                    spec.mode == PoolMode::kExternalAndSeen;
  const bool unseen = spec.mode == PoolMode::kSeenAndUnseen || spec.mode == PoolMode::kExternalAndUnseen;
  const bool external = spec.mode == PoolMode::kExternal || spec.mode == PoolMode::kExternalAndUnseen ||
                        spec.mode == PoolMode::kExternalAndSeen;
  auto add = [&pool](const ImageRecord& rec) {
    // Pixels only: the rotation task never sees class or attribute labels.
    pool.sources.push_back(ImageRecord{rec.id, rec.pixels, std::nullopt});
  };
  if (seen) {
    for (const auto& id : bundle.splits.train_samples) add(bundle.image(id));
    pool.from_seen = bundle.splits.train_samples.size();
  }
  if (unseen) {
    for (const auto& id : bundle.splits.test_unseen) add(bundle.image(id));
    pool.from_unseen = bundle.splits.test_unseen.size();
  }
  if (external) {
    if (!spec.external_dir) throw ValidationError("pool '" + std::string(pool_mode_name(spec.mode)) + "' needs an external directory");
    auto ext = load_image_pool(*spec.external_dir, image_size);
    if (ext.empty()) throw ValidationError("external pool " + spec.external_dir->string() + " contains no .ppm images");
    for (auto& rec : ext) pool.sources.push_back(std::move(rec));
    pool.from_external = ext.size();
  }
  return pool;
}

namespace {

// k distinct indices from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

Batch build_batch(const DatasetBundle& bundle, const RotationPool& pool, const BatchGeometry& geometry, Rng& rng) {
  const auto& train = bundle.splits.train_samples;
  if (train.size() < geometry.labelled) {
    throw ValidationError("need at least " + std::to_string(geometry.labelled) + " train samples, have " +
                          std::to_string(train.size()));
  }
  Batch batch;
  batch.labelled.reserve(geometry.labelled);
  for (std::size_t i : sample_without_replacement(train.size(), geometry.labelled, rng)) {
    const auto& rec = bundle.image(train[i]);
    auto row = bundle.attributes.row(*rec.class_id);
    batch.labelled.push_back(LabelledItem{rec.id, rec.pixels, std::vector<double>(row.begin(), row.end())});
  }
  if (pool.mode == PoolMode::kNone || geometry.rotation_sources == 0) return batch;
  if (pool.sources.empty()) {
    throw ValidationError("rotation pool '" + std::string(pool_mode_name(pool.mode)) + "' is empty");
  }
  if (pool.sources.size() < geometry.rotation_sources) {
    throw ValidationError("rotation pool has " + std::to_string(pool.sources.size()) + " images, batch needs " +
                          std::to_string(geometry.rotation_sources));
  }
  batch.rotated.reserve(geometry.rotation_sources * 4);
  for (std::size_t i : sample_without_replacement(pool.sources.size(), geometry.rotation_sources, rng)) {
    const auto& src = pool.sources[i];
    for (int a = 0; a < 4; ++a) batch.rotated.push_back(RotatedItem{src.id, rotate_pixels(src.pixels, a), a});
  }
  return batch;
}

}  // namespace zsl
