#include "aastereo/data_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "aastereo/error.hpp"

namespace aastereo {

void StereoPair::validate() const {
  require_rank("stereo pair", left, 3);
  require_same_shape("stereo pair (left, right)", left, right);
  const Shape plane{left.dim(0), left.dim(1)};
  auto check = [&](const std::optional<DisparityMap>& map, const char* what) {
    if (!map) return;
    if (map->disparity.shape() != plane || (map->has_mask() && map->mask.shape() != plane)) {
      throw ShapeError(std::string("stereo pair: ") + what + " map " +
                       shape_string(map->disparity.shape()) + " does not match image " +
                       shape_string(plane));
    }
  };
  check(gt, "gt");
  check(pseudo, "pseudo");
}

Tensor hwc_to_chw(const Tensor& image) {
  require_rank("hwc_to_chw", image, 3);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out({c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out[(k * h + y) * w + x] = image[(y * w + x) * c + k];
  return out;
}

Tensor chw_to_hwc(const Tensor& image) {
  require_rank("chw_to_hwc", image, 3);
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({h, w, c});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out[(y * w + x) * c + k] = image[(k * h + y) * w + x];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::string& header,
                 const std::vector<unsigned char>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

// Whitespace-separated header tokens of the netpbm/PFM family.
class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, std::string file, bool comments)
      : bytes_(bytes), file_(std::move(file)), comments_(comments) {}

  std::string token() {
    skip_space();
    std::string t;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) t.push_back(static_cast<char>(bytes_[pos_++]));
    if (t.empty()) throw FormatError(file_ + ": truncated header");
    return t;
  }

  std::uint64_t number(const char* what) {
    const std::string t = token();
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec == std::errc::result_out_of_range) throw FormatError(file_ + ": " + what + " overflows");
    if (ec != std::errc() || ptr != t.data() + t.size()) {
      throw FormatError(file_ + ": bad " + what + " '" + t + "'");
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the samples.
  std::size_t end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError(file_ + ": missing separator after header");
    }
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (comments_ && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string file_;
  bool comments_;
  std::size_t pos_ = 0;
};

// Rejects zero extents and H * W * channels * bytes overflowing size_t.
std::size_t payload_size(const std::string& file, std::uint64_t w, std::uint64_t h,
                         std::uint64_t channels, std::uint64_t sample_bytes) {
  if (w == 0 || h == 0) throw FormatError(file + ": image dimensions must be positive");
  constexpr std::uint64_t limit = std::numeric_limits<std::size_t>::max();
  std::uint64_t total = w;
  for (std::uint64_t f : {h, channels, sample_bytes}) {
    if (total > limit / f) throw FormatError(file + ": dimensions overflow");
    total *= f;
  }
  return static_cast<std::size_t>(total);
}

}  // namespace

DisparityMap read_pfm(const std::filesystem::path& path) {
  const std::string file = path.string();
  const auto bytes = read_bytes(path);
  HeaderReader header(bytes, file, false);
  const std::string magic = header.token();
  if (magic == "PF") throw FormatError(file + ": color PFM (PF) is not supported");
  if (magic != "Pf") throw FormatError(file + ": bad PFM magic '" + magic + "'");
  const std::uint64_t w = header.number("width");
  const std::uint64_t h = header.number("height");
  const std::string scale_token = header.token();
  double scale = 0.0;
  try {
    scale = std::stod(scale_token);
  } catch (const std::exception&) {
    throw FormatError(file + ": bad scale '" + scale_token + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw FormatError(file + ": scale must be nonzero");
  const bool little = scale < 0.0;
  const std::size_t start = header.end_of_header();
  const std::size_t need = payload_size(file, w, h, 1, 4);
  if (bytes.size() - start < need) {
    throw FormatError(file + ": expected " + std::to_string(need) + " data bytes, found " +
                      std::to_string(bytes.size() - start));
  }

  DisparityMap map{Tensor({h, w}), Tensor({h, w}, 1.0)};
  bool any_invalid = false;
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t y = h - 1 - row;  // bottom-up storage
    for (std::size_t x = 0; x < w; ++x) {
      const unsigned char* p = bytes.data() + start + (row * w + x) * 4;
      const std::uint32_t bits =
          little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
                    std::uint32_t{p[3]} << 24)
                 : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 |
                    std::uint32_t{p[0]} << 24);
      const double v = std::bit_cast<float>(bits);
      map.disparity(y, x) = v;
      if (!std::isfinite(v)) {
        map.mask(y, x) = 0.0;
        any_invalid = true;
      }
    }
  }
  if (!any_invalid) map.mask = Tensor();
  return map;
}

void write_pfm(const DisparityMap& map, const std::filesystem::path& path) {
  require_rank("write_pfm", map.disparity, 2);
  const std::size_t h = map.height(), w = map.width();
  std::vector<unsigned char> body(h * w * 4);
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t y = h - 1 - row;
    for (std::size_t x = 0; x < w; ++x) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(map.disparity(y, x)));
      unsigned char* p = body.data() + (row * w + x) * 4;
      for (int b = 0; b < 4; ++b) p[b] = static_cast<unsigned char>(bits >> (8 * b));
    }
  }
  write_bytes(path, "Pf\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n", body);
}

// ---------------------------------------------------------------------------

Tensor read_image(const std::filesystem::path& path) {
  const std::string file = path.string();
  const auto bytes = read_bytes(path);
  HeaderReader header(bytes, file, true);
  const std::string magic = bytes.size() >= 2 ? std::string(bytes.begin(), bytes.begin() + 2) : "";
  if (magic == "P2") throw FormatError(file + ": ASCII PGM (P2) is not supported");
  if (magic == "P3") throw FormatError(file + ": ASCII PPM (P3) is not supported");
  if (magic == "P1" || magic == "P4") throw FormatError(file + ": PBM bitmaps are not supported");
  if (magic == "Pf" || magic == "PF") throw FormatError(file + ": PFM is not an image format here");
  if (magic != "P5" && magic != "P6") throw FormatError(file + ": not a binary PGM/PPM file");
  header.token();
  const std::size_t channels = magic == "P5" ? 1 : 3;
  const std::uint64_t w = header.number("width");
  const std::uint64_t h = header.number("height");
  const std::uint64_t maxval = header.number("maxval");
  if (maxval == 0 || maxval > 65535) throw FormatError(file + ": maxval must be in 1..65535");
  const std::size_t start = header.end_of_header();
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t need = payload_size(file, w, h, channels, sample_bytes);
  if (bytes.size() - start < need) {
    throw FormatError(file + ": expected " + std::to_string(need) + " data bytes, found " +
                      std::to_string(bytes.size() - start));
  }
  Tensor out({h, w, channels});
  const double scale = static_cast<double>(maxval);
  const unsigned char* p = bytes.data() + start;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const unsigned v = sample_bytes == 2 ? (unsigned{p[2 * i]} << 8 | p[2 * i + 1]) : p[i];
    if (v > maxval) throw FormatError(file + ": sample exceeds maxval");
    out[i] = v / scale;
  }
  return out;
}

void write_image(const Tensor& image, const std::filesystem::path& path, std::uint16_t maxval) {
  require_rank("write_image", image, 3);
  const std::size_t channels = image.dim(2);
  if (channels != 1 && channels != 3) {
    throw ShapeError("write_image: expected 1 or 3 channels, got " + std::to_string(channels));
  }
  if (maxval == 0) throw std::invalid_argument("write_image: maxval must be positive");
  const bool wide = maxval > 255;
  std::vector<unsigned char> body;
  body.reserve(image.size() * (wide ? 2 : 1));
  for (double v : image.data()) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (wide) body.push_back(static_cast<unsigned char>(q >> 8));
    body.push_back(static_cast<unsigned char>(q & 0xff));
  }
  const std::string header = std::string(channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) +
                             "\n" + std::to_string(maxval) + "\n";
  write_bytes(path, header, body);
}

// ---------------------------------------------------------------------------

void SyntheticSceneSpec::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("stereogram: empty image size");
  if (channels != 1 && channels != 3) throw std::invalid_argument("stereogram: channels must be 1 or 3");
  if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("stereogram: density must be in (0, 1]");
  if (layers.empty()) {
    if (num_layers == 0) throw std::invalid_argument("stereogram: need at least one layer");
    if (min_disparity > max_disparity) throw std::invalid_argument("stereogram: min disparity exceeds max");
    if (max_disparity >= width) {
      throw std::invalid_argument("stereogram: disparity " + std::to_string(max_disparity) +
                                  " must be smaller than width " + std::to_string(width));
    }
  }
  for (const auto& layer : layers) {
    if (layer.disparity >= width) {
      throw std::invalid_argument("stereogram: disparity " + std::to_string(layer.disparity) +
                                  " must be smaller than width " + std::to_string(width));
    }
  }
}

namespace {

std::vector<LayerRect> scene_layers(const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  if (!spec.layers.empty()) return spec.layers;
  std::uniform_int_distribution<std::size_t> disparity(spec.min_disparity, spec.max_disparity);
  std::vector<std::size_t> ds(spec.num_layers);
  for (auto& d : ds) d = disparity(rng);
  std::sort(ds.begin(), ds.end(), std::greater<>());
  std::vector<LayerRect> layers;
  const std::size_t min_h = std::max<std::size_t>(1, spec.height / 4);
  const std::size_t min_w = std::max<std::size_t>(1, spec.width / 4);
  for (std::size_t i = 0; i + 1 < ds.size(); ++i) {
    LayerRect r;
    r.height = std::uniform_int_distribution<std::size_t>(min_h, std::max(min_h, spec.height / 2))(rng);
    r.width = std::uniform_int_distribution<std::size_t>(min_w, std::max(min_w, spec.width / 2))(rng);
    r.top = std::uniform_int_distribution<std::size_t>(0, spec.height - std::min(r.height, spec.height))(rng);
    r.left = std::uniform_int_distribution<std::size_t>(0, spec.width - std::min(r.width, spec.width))(rng);
    r.disparity = ds[i];
    layers.push_back(r);
  }
  layers.push_back(LayerRect{0, 0, spec.height, spec.width, ds.back()});
  return layers;
}

bool contains(const LayerRect& r, std::size_t y, std::size_t x) {
  return y >= r.top && y < r.top + r.height && x >= r.left && x < r.left + r.width;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

StereoPair generate_stereogram(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::vector<LayerRect> layers = scene_layers(spec, rng);
  const std::size_t H = spec.height, W = spec.width, C = spec.channels, L = layers.size();
  std::size_t reach = 0;
  for (const auto& layer : layers) reach = std::max(reach, layer.disparity);
  const std::size_t T = W + reach;

  std::bernoulli_distribution dot(spec.density);
  std::uniform_int_distribution<int> level(1, 255);
  std::vector<Tensor> textures;
  for (std::size_t l = 0; l < L; ++l) {
    Tensor tex({H, T, C});
    for (std::size_t i = 0; i < H * T; ++i) {
      if (!dot(rng)) continue;
      for (std::size_t c = 0; c < C; ++c) tex[i * C + c] = level(rng) / 255.0;
    }
    textures.push_back(std::move(tex));
  }

  // Frontmost layer covering left-image column u (the background covers all).
  auto layer_at = [&](std::size_t y, std::size_t u) {
    for (std::size_t l = 0; l + 1 < L; ++l) {
      if (contains(layers[l], y, u)) return l;
    }
    return L - 1;
  };
  // Frontmost layer seen by right-image column x.
  auto right_layer_at = [&](std::size_t y, std::size_t x) {
    for (std::size_t l = 0; l + 1 < L; ++l) {
      if (contains(layers[l], y, x + layers[l].disparity)) return l;
    }
    return L - 1;
  };

  StereoPair pair;
  pair.left = Tensor({H, W, C});
  pair.right = Tensor({H, W, C});
  DisparityMap gt{Tensor({H, W}), Tensor({H, W})};
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t l = layer_at(y, x);
      const std::size_t d = layers[l].disparity;
      const std::size_t r = right_layer_at(y, x);
      for (std::size_t c = 0; c < C; ++c) {
        pair.left(y, x, c) = textures[l](y, x, c);
        pair.right(y, x, c) = textures[r](y, x + layers[r].disparity, c);
      }
      gt.disparity(y, x) = static_cast<double>(d);
      gt.mask(y, x) = (x >= d && right_layer_at(y, x - d) == l) ? 1.0 : 0.0;
    }
  }
  pair.gt = std::move(gt);
  return pair;
}

std::vector<StereoPair> generate_dataset(const SyntheticSceneSpec& spec, std::size_t count) {
  std::vector<StereoPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticSceneSpec s = spec;
    s.seed = splitmix64(spec.seed + i);
    out.push_back(generate_stereogram(s));
  }
  return out;
}

DisparityMap sparsify_mask(const DisparityMap& gt, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("sparsify_mask: keep fraction must be in (0, 1]");
  }
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < gt.disparity.size(); ++i) {
    if (gt.valid(i)) valid.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(valid.begin(), valid.end(), rng);
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(valid.size())));
  DisparityMap out{gt.disparity, Tensor(gt.disparity.shape())};
  for (std::size_t i = 0; i < keep; ++i) out.mask[valid[i]] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string indexed(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, i, ext);
  return buf;
}

Tensor mask_image(const Tensor& mask) {
  Tensor out({mask.dim(0), mask.dim(1), 1});
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] != 0.0 ? 1.0 : 0.0;
  return out;
}

}  // namespace

void write_dataset(const std::vector<StereoPair>& pairs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const StereoPair& p = pairs[i];
    p.validate();
    const char* ext = p.left.dim(2) == 1 ? "pgm" : "ppm";
    write_image(p.left, dir / indexed("left", i, ext));
    write_image(p.right, dir / indexed("right", i, ext));
    if (p.gt) {
      write_pfm(*p.gt, dir / indexed("disp", i, "pfm"));
      if (p.gt->has_mask()) write_image(mask_image(p.gt->mask), dir / indexed("mask", i, "pgm"));
    }
    if (p.pseudo) write_pfm(*p.pseudo, dir / indexed("pseudo", i, "pfm"));
  }
}

std::vector<StereoPair> read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("data directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> lefts;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string ext = entry.path().extension().string();
    if (name.rfind("left_", 0) == 0 && (ext == ".ppm" || ext == ".pgm")) lefts.push_back(entry.path());
  }
  std::sort(lefts.begin(), lefts.end());
  if (lefts.empty()) throw std::invalid_argument("data directory " + dir.string() + " has no left_* images");

  std::vector<StereoPair> pairs;
  for (const auto& left : lefts) {
    const std::string id = left.stem().string().substr(5);
    auto sibling = [&](const std::string& stem, const std::string& ext) {
      return dir / (stem + "_" + id + ext);
    };
    StereoPair p;
    p.left = read_image(left);
    p.right = read_image(sibling("right", left.extension().string()));
    if (std::filesystem::exists(sibling("disp", ".pfm"))) {
      DisparityMap gt = read_pfm(sibling("disp", ".pfm"));
      if (std::filesystem::exists(sibling("mask", ".pgm"))) {
        const Tensor m = read_image(sibling("mask", ".pgm"));
        Tensor mask({m.dim(0), m.dim(1)});
        for (std::size_t i = 0; i < mask.size(); ++i) {
          mask[i] = m[i] != 0.0 && gt.valid(i) ? 1.0 : 0.0;
        }
        gt.mask = std::move(mask);
      }
      p.gt = std::move(gt);
    }
    if (std::filesystem::exists(sibling("pseudo", ".pfm"))) p.pseudo = read_pfm(sibling("pseudo", ".pfm"));
    p.validate();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace aastereo
