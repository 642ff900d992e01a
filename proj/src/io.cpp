#include "fctl/io.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fctl/binary.hpp"
#include "fctl/error.hpp"
#include "fctl/tensor_io.hpp"

namespace fctl {

namespace {

// Reads the whitespace/comment separated header fields of a netpbm file and
// leaves the cursor on the first payload byte.
struct NetpbmHeader {
  std::string magic;
  Index width = 0, height = 0, maxval = 0;
  std::size_t offset = 0;
};

NetpbmHeader read_netpbm_header(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok.push_back(static_cast<char>(bytes[pos++]));
    if (tok.empty()) throw IoError("truncated netpbm header");
    return tok;
  };
  auto number = [&]() {
    const std::string tok = next_token();
    Index v = 0;
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size() || v <= 0) throw IoError("bad netpbm header field '" + tok + "'");
    return v;
  };
  NetpbmHeader h;
  h.magic = next_token();
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("truncated netpbm header");
  h.offset = pos + 1;
  if (h.maxval != 255) throw IoError("only maxval 255 is supported, got " + std::to_string(h.maxval));
  return h;
}

std::string netpbm_header(const char* magic, Index w, Index h) {
  return std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("bad value '" + text + "' for " + key);
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string encode_ppm(const RgbImage& image) {
  std::string out = netpbm_header("P6", image.width, image.height);
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  const auto h = read_netpbm_header(bytes);
  if (h.magic != "P6") throw IoError("not a binary PPM (P6) file");
  RgbImage img(h.height, h.width);
  if (bytes.size() - h.offset != img.pixels.size()) throw IoError("PPM payload size mismatch");
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.offset), bytes.end(), img.pixels.begin());
  return img;
}

std::string encode_pgm(const LabelMap& labels) {
  std::string out = netpbm_header("P5", labels.width, labels.height);
  out.append(labels.labels.begin(), labels.labels.end());
  return out;
}

LabelMap decode_pgm(std::span<const std::uint8_t> bytes) {
  const auto h = read_netpbm_header(bytes);
  if (h.magic != "P5") throw IoError("not a binary PGM (P5) file");
  LabelMap map(h.height, h.width);
  if (bytes.size() - h.offset != map.labels.size()) throw IoError("PGM payload size mismatch");
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.offset), bytes.end(), map.labels.begin());
  return map;
}

void save_ppm(const std::filesystem::path& path, const RgbImage& image) { write_file_atomic(path, encode_ppm(image)); }
RgbImage load_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }
void save_pgm(const std::filesystem::path& path, const LabelMap& labels) { write_file_atomic(path, encode_pgm(labels)); }
LabelMap load_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out = "FCTL";
  binary::put_uint(out, kCheckpointVersion);
  binary::put_uint(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params.entries()) {
    if (p.name.size() > 0xFFFF) throw IoError("parameter name too long: " + p.name.substr(0, 32));
    binary::put_uint(out, static_cast<std::uint16_t>(p.name.size()));
    out += p.name;
    out.push_back(static_cast<char>(p.tensor.rank()));
    for (Index d : p.tensor.shape()) binary::put_uint(out, static_cast<std::uint32_t>(d));
    for (float v : p.tensor.data()) binary::put_float(out, v);
  }
  binary::put_uint(out, ckpt.seed);
  binary::put_uint(out, ckpt.epochs);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes);
  const auto magic = r.take(4);
  if (std::string(magic.begin(), magic.end()) != "FCTL") throw IoError("not a checkpoint (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.uint<std::uint16_t>();
    const auto name_bytes = r.take(len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = r.uint<std::uint8_t>();
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<Index>(r.uint<std::uint32_t>()));
    std::vector<float> values(static_cast<std::size_t>(numel(shape)));
    for (float& v : values) v = r.real<float>();
    if (ckpt.params.contains(name)) throw IoError("duplicate parameter " + name);
    ckpt.params.add_existing(name, Tensor<float>(std::move(shape), std::move(values), true));
  }
  ckpt.seed = r.uint<std::uint64_t>();
  ckpt.epochs = r.uint<std::uint32_t>();
  if (!r.done()) throw IoError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  return decode_checkpoint(read_file(path));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "patch") patch = parse_number<Index>(key, value);
  else if (key == "overlap") overlap = parse_number<Index>(key, value);
  else if (key == "context_lambdas") {
    contexts.clear();
    if (value != "none" && !value.empty()) {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          contexts.push_back(ContextScale::parse(trim(item)));
        } catch (const Error& e) {
          throw ConfigError("context_lambdas: " + std::string(e.what()));
        }
      }
    }
  } else if (key == "num_classes") num_classes = parse_number<Index>(key, value);
  else if (key == "lr0") lr0 = parse_number<double>(key, value);
  else if (key == "epochs") epochs = parse_number<Index>(key, value);
  else if (key == "gamma") gamma = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "refine_scale") refine_scale = parse_number<double>(key, value);
  else if (key == "merge_mode") merge_mode = parse_merge_mode(value);
  else if (key == "aggregate") aggregate = parse_aggregate(value);
  else if (key == "fusion") fusion = parse_fusion(value);
  else if (key == "accum_steps") accum_steps = parse_number<Index>(key, value);
  else if (key == "refine_source_epochs") refine_source_epochs = parse_number<Index>(key, value);
  else if (key == "refine_epochs") refine_epochs = parse_number<Index>(key, value);
  else if (key == "flips") {
    if (value == "true" || value == "1") flips = true;
    else if (value == "false" || value == "0") flips = false;
    else throw ConfigError("flips must be true or false");
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

void RunConfig::validate() const {
  seg_model().validate();
  refine_model().validate();
  seg_training().validate();
  refine_training().validate();
  if (overlap < 0 || overlap >= patch) throw ConfigError("overlap must lie in [0, patch)");
}

SegModelConfig RunConfig::seg_model() const {
  SegModelConfig m;
  m.num_classes = num_classes;
  m.contexts = contexts;
  m.patch = patch;
  m.focal_gamma = gamma;
  m.aggregate = aggregate;
  m.fusion = fusion;
  return m;
}

RefineConfig RunConfig::refine_model() const {
  RefineConfig r;
  r.num_classes = num_classes;
  r.patch = patch;
  r.aggregate = aggregate;
  r.context_scale = ContextScale::scaled(refine_scale);
  return r;
}

TrainConfig RunConfig::seg_training() const {
  TrainConfig t;
  t.lr0 = lr0;
  t.accum_steps = accum_steps;
  t.epochs = epochs;
  t.seed = seed;
  t.focal_gamma = gamma;
  t.refine_source_epochs = refine_source_epochs;
  t.flips = flips;
  t.overlap = overlap;
  return t;
}

TrainConfig RunConfig::refine_training() const {
  TrainConfig t = seg_training();
  t.epochs = refine_epochs;
  t.refine_source_epochs = -1;
  return t;
}

PipelineOptions RunConfig::pipeline() const { return {patch, overlap, num_classes, merge_mode}; }

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  const auto bytes = read_file(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()), std::move(base));
}

std::string format_run_config(const RunConfig& c) {
  std::string lambdas;
  for (std::size_t i = 0; i < c.contexts.size(); ++i) lambdas += (i ? "," : "") + c.contexts[i].to_string();
  if (lambdas.empty()) lambdas = "none";
  std::ostringstream out;
  out << "patch=" << c.patch << "\n"
      << "overlap=" << c.overlap << "\n"
      << "context_lambdas=" << lambdas << "\n"
      << "num_classes=" << c.num_classes << "\n"
      << "lr0=" << format_double(c.lr0) << "\n"
      << "epochs=" << c.epochs << "\n"
      << "gamma=" << format_double(c.gamma) << "\n"
      << "seed=" << c.seed << "\n"
      << "refine_scale=" << format_double(c.refine_scale) << "\n"
      << "merge_mode=" << to_string(c.merge_mode) << "\n"
      << "aggregate=" << to_string(c.aggregate) << "\n"
      << "fusion=" << to_string(c.fusion) << "\n"
      << "accum_steps=" << c.accum_steps << "\n"
      << "refine_source_epochs=" << c.refine_source_epochs << "\n"
      << "refine_epochs=" << c.refine_epochs << "\n"
      << "flips=" << (c.flips ? "true" : "false") << "\n";
  return out.str();
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  std::string manifest = "id,image,labels\n";
  for (const auto& s : data) {
    const std::string img = "images/" + s.id + ".ppm", lab = "labels/" + s.id + ".pgm";
    save_ppm(dir / img, s.image);
    save_pgm(dir / lab, s.labels);
    manifest += s.id + "," + img + "," + lab + "\n";
  }
  write_file_atomic(dir / "manifest.csv", manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto bytes = read_file(dir / "manifest.csv");
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line) || trim(line) != "id,image,labels") throw IoError("manifest.csv: bad header");
  Dataset data;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.find(',', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      throw IoError("manifest.csv line " + std::to_string(line_no) + ": expected id,image,labels");
    }
    Sample s;
    s.id = line.substr(0, a);
    s.image = load_ppm(dir / line.substr(a + 1, b - a - 1));
    s.labels = load_pgm(dir / line.substr(b + 1));
    if (s.image.height != s.labels.height || s.image.width != s.labels.width) {
      throw IoError("sample " + s.id + ": image and labels differ in size");
    }
    data.push_back(std::move(s));
  }
  if (data.empty()) throw IoError("dataset " + dir.string() + " is empty");
  return data;
}

}  // namespace fctl
