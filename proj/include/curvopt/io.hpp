#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "curvopt/errors.hpp"
#include "curvopt/network.hpp"
#include "curvopt/optimizers.hpp"
#include "curvopt/tasks.hpp"

namespace curvopt {

// %.17g round-trips doubles exactly and is locale-independent here
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("short write to '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Netpbm codecs: PGM (P2/P5) and PPM (P3/P6), maxval up to 65535. Pixels are
// normalized to [0,1] on read; writes emit binary P5/P6 at maxval 255 with
// half-up rounding.
// ---------------------------------------------------------------------------

namespace detail {

struct PnmCursor {
  const std::string& bytes;
  std::size_t pos = 0;

  bool eof() const { return pos >= bytes.size(); }

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
        ++pos;
      } else {
        break;
      }
    }
  }

  // unsigned decimal token
  std::size_t next_uint(const char* what) {
    skip_space_and_comments();
    if (eof()) throw ParseError(std::string("unexpected end of file reading ") + what, pos);
    if (bytes[pos] < '0' || bytes[pos] > '9')
      throw ParseError(std::string("expected digit for ") + what, pos);
    std::size_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > 1000000000) throw ParseError(std::string("value out of range for ") + what, pos);
      ++pos;
    }
    return v;
  }
};

}  // namespace detail

inline ImageSignal decode_image(const std::string& bytes) {
  detail::PnmCursor cur{bytes};
  if (bytes.size() < 2) throw ParseError("file too short for a netpbm header", 0);
  const char magic0 = bytes[0];
  const char magic1 = bytes[1];
  if (magic0 != 'P') throw ConfigError("unsupported image format (not a netpbm file)");
  if (magic1 != '2' && magic1 != '3' && magic1 != '5' && magic1 != '6')
    throw ConfigError(std::string("unsupported netpbm magic 'P") + magic1 +
                      "' (supported: P2, P3, P5, P6)");
  cur.pos = 2;
  const bool color = (magic1 == '3' || magic1 == '6');
  const bool binary = (magic1 == '5' || magic1 == '6');
  const std::size_t channels = color ? 3 : 1;

  const std::size_t width = cur.next_uint("width");
  const std::size_t height = cur.next_uint("height");
  const std::size_t maxval = cur.next_uint("maxval");
  if (width == 0 || height == 0) throw ParseError("zero image dimension", cur.pos);
  if (maxval == 0 || maxval > 65535) throw ParseError("maxval must be in [1, 65535]", cur.pos);
  if (width * height > 100000000) throw ParseError("image implausibly large", cur.pos);

  ImageSignal img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.resize(width * height * channels);
  const std::size_t count = img.pixels.size();
  const double scale = 1.0 / static_cast<double>(maxval);

  if (binary) {
    // exactly one whitespace byte separates the header from the raster
    if (cur.eof()) throw ParseError("unexpected end of file before raster", cur.pos);
    const char sep = bytes[cur.pos];
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
      throw ParseError("missing whitespace before binary raster", cur.pos);
    ++cur.pos;
    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    if (bytes.size() - cur.pos < count * bytes_per_sample)
      throw ParseError("truncated raster: expected " + std::to_string(count * bytes_per_sample) +
                           " bytes, found " + std::to_string(bytes.size() - cur.pos),
                       cur.pos);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t v;
      if (bytes_per_sample == 1) {
        v = static_cast<unsigned char>(bytes[cur.pos]);
        cur.pos += 1;
      } else {  // big-endian per netpbm
        v = static_cast<std::size_t>(static_cast<unsigned char>(bytes[cur.pos])) << 8 |
            static_cast<unsigned char>(bytes[cur.pos + 1]);
        cur.pos += 2;
      }
      if (v > maxval) throw ParseError("sample exceeds maxval", cur.pos - bytes_per_sample);
      img.pixels[i] = static_cast<double>(v) * scale;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t v = cur.next_uint("sample");
      if (v > maxval) throw ParseError("sample exceeds maxval", cur.pos);
      img.pixels[i] = static_cast<double>(v) * scale;
    }
  }
  return img;
}

inline ImageSignal read_image(const std::string& path) {
  return decode_image(detail::read_file_bytes(path));
}

inline std::string encode_image(const ImageSignal& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ConfigError("write_image: channels must be 1 or 3");
  std::string out;
  out += img.channels == 3 ? "P6\n" : "P5\n";
  out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double px : img.pixels) {
    const double clamped = std::clamp(px, 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::floor(clamped * 255.0 + 0.5));
    out.push_back(static_cast<char>(q > 255 ? 255 : q));
  }
  return out;
}

inline void write_image(const ImageSignal& img, const std::string& path) {
  detail::write_file_bytes(path, encode_image(img));
}

// ---------------------------------------------------------------------------
// WAV codec: single-channel 16-bit PCM. Unknown chunks before "data" are
// skipped; compressed or multichannel content is rejected.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t rd_u32le(const std::string& b, std::size_t pos) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 3])) << 24;
}

inline std::uint16_t rd_u16le(const std::string& b, std::size_t pos) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[pos]) |
                                    static_cast<unsigned char>(b[pos + 1]) << 8);
}

inline void wr_u32le(std::string& b, std::uint32_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
  b.push_back(static_cast<char>((v >> 16) & 0xff));
  b.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void wr_u16le(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

inline AudioSignal decode_audio(const std::string& bytes) {
  if (bytes.size() < 12) throw ParseError("file too short for a RIFF header", 0);
  if (bytes.compare(0, 4, "RIFF") != 0) throw ConfigError("unsupported audio format (not RIFF)");
  if (bytes.compare(8, 4, "WAVE") != 0) throw ConfigError("unsupported audio format (not WAVE)");

  AudioSignal audio;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = detail::rd_u32le(bytes, pos + 4);
    pos += 8;
    if (bytes.size() - pos < size) throw ParseError("truncated '" + id + "' chunk", pos);
    if (id == "fmt ") {
      if (size < 16) throw ParseError("fmt chunk too small", pos);
      const std::uint16_t format = detail::rd_u16le(bytes, pos);
      const std::uint16_t chans = detail::rd_u16le(bytes, pos + 2);
      const std::uint32_t rate = detail::rd_u32le(bytes, pos + 4);
      const std::uint16_t bits = detail::rd_u16le(bytes, pos + 14);
      if (format != 1) throw ConfigError("unsupported WAV: compressed (format tag " +
                                         std::to_string(format) + "), PCM required");
      if (chans != 1)
        throw ConfigError("unsupported WAV: " + std::to_string(chans) + " channels, mono required");
      if (bits != 16)
        throw ConfigError("unsupported WAV: " + std::to_string(bits) + "-bit, 16-bit required");
      audio.sample_rate = rate;
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk", pos);
      if (size % 2 != 0) throw ParseError("odd data chunk size for 16-bit samples", pos);
      const std::size_t n = size / 2;
      audio.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint16_t raw = detail::rd_u16le(bytes, pos + 2 * i);
        const auto s = static_cast<std::int16_t>(raw);
        audio.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return audio;
    }
    pos += size + (size % 2);  // chunks are word-aligned
  }
  throw ParseError(have_fmt ? "missing data chunk" : "missing fmt chunk", pos);
}

inline AudioSignal read_audio(const std::string& path) {
  return decode_audio(detail::read_file_bytes(path));
}

inline std::string encode_audio(const AudioSignal& audio) {
  const std::size_t n = audio.samples.size();
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  detail::wr_u32le(out, static_cast<std::uint32_t>(36 + 2 * n));
  out += "WAVEfmt ";
  detail::wr_u32le(out, 16);
  detail::wr_u16le(out, 1);  // PCM
  detail::wr_u16le(out, 1);  // mono
  detail::wr_u32le(out, audio.sample_rate);
  detail::wr_u32le(out, audio.sample_rate * 2);
  detail::wr_u16le(out, 2);
  detail::wr_u16le(out, 16);
  out += "data";
  detail::wr_u32le(out, static_cast<std::uint32_t>(2 * n));
  for (double x : audio.samples) {
    long v = std::lround(x * 32768.0);
    v = std::clamp(v, -32768l, 32767l);  // saturating inverse of the read mapping
    detail::wr_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

inline void write_audio(const AudioSignal& audio, const std::string& path) {
  detail::write_file_bytes(path, encode_audio(audio));
}

// ---------------------------------------------------------------------------
// Convergence CSV. Fixed schema: iter,elapsed_ms,loss,grad_norm,psnr.
// The psnr field is empty for fits without a signal peak.
// ---------------------------------------------------------------------------

inline std::string convergence_csv(const std::vector<IterationRecord>& trace) {
  std::string out = "iter,elapsed_ms,loss,grad_norm,psnr\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iter);
    out += ',';
    out += fmt_double(r.elapsed_ms);
    out += ',';
    out += fmt_double(r.loss);
    out += ',';
    out += fmt_double(r.grad_norm);
    out += ',';
    if (r.psnr) out += fmt_double(*r.psnr);
    out += '\n';
  }
  return out;
}

inline void write_convergence_csv(const std::vector<IterationRecord>& trace,
                                  const std::string& path) {
  detail::write_file_bytes(path, convergence_csv(trace));
}

// ---------------------------------------------------------------------------
// Run summary: ordered key = value document. Wall-clock measurements live in
// a separate [timing] section so determinism comparisons can drop it.
// ---------------------------------------------------------------------------

struct RunSummary {
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<std::pair<std::string, std::string>> timing;

  void add(const std::string& key, const std::string& value) { fields.emplace_back(key, value); }
  void add(const std::string& key, double value) { fields.emplace_back(key, fmt_double(value)); }
  void add(const std::string& key, std::size_t value) {
    fields.emplace_back(key, std::to_string(value));
  }
  void add_timing(const std::string& key, double seconds) {
    timing.emplace_back(key, fmt_double(seconds));
  }

  std::string to_text() const {
    std::string out = "# curvopt run summary\nschema_version = 1\n";
    for (const auto& [k, v] : fields) out += k + " = " + v + "\n";
    if (!timing.empty()) {
      out += "[timing]\n";
      for (const auto& [k, v] : timing) out += k + " = " + v + "\n";
    }
    return out;
  }

  void write(const std::string& path) const { detail::write_file_bytes(path, to_text()); }
};

// ---------------------------------------------------------------------------
// Spectrum artifacts: one eigenvalue per line, plus a histogram CSV.
// ---------------------------------------------------------------------------

inline void write_eigenvalues(const SpectrumReport& rep, const std::string& path) {
  std::string out;
  out.reserve(rep.eigenvalues.size() * 24);
  for (double ev : rep.eigenvalues) {
    out += fmt_double(ev);
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

inline void write_histogram_csv(const SpectrumReport& rep, const std::string& path) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < rep.hist_counts.size(); ++b) {
    out += fmt_double(rep.hist_edges[b]);
    out += ',';
    out += fmt_double(rep.hist_edges[b + 1]);
    out += ',';
    out += std::to_string(rep.hist_counts[b]);
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

// ---------------------------------------------------------------------------
// Model artifact: network description plus parameters at full precision.
// A saved model reloads to the exact same parameter vector.
// ---------------------------------------------------------------------------

struct ModelArtifact {
  NetworkSpec spec;
  Vec params;
  std::string signal;  // "image" or "audio"
  std::size_t img_width = 0, img_height = 0;
  std::uint32_t sample_rate = 0;
  std::size_t num_samples = 0;
};

inline std::string init_scheme_name(InitScheme s) {
  switch (s) {
    case InitScheme::kAuto: return "auto";
    case InitScheme::kSirenUniform: return "siren";
    case InitScheme::kXavierUniform: return "xavier";
  }
  return "?";
}

inline InitScheme parse_init_scheme(const std::string& s) {
  if (s == "auto") return InitScheme::kAuto;
  if (s == "siren") return InitScheme::kSirenUniform;
  if (s == "xavier") return InitScheme::kXavierUniform;
  throw ConfigError("unknown init scheme '" + s + "'");
}

inline void save_model(const ModelArtifact& model, const std::string& path) {
  const NetworkSpec& spec = model.spec;
  std::string out = "# curvopt model\nschema_version = 1\n";
  out += "activation = " + spec.activation.name() + "\n";
  out += "omega = " + fmt_double(spec.activation.omega) + "\n";
  out += "mu = " + fmt_double(spec.activation.mu) + "\n";
  out += "sigma = " + fmt_double(spec.activation.sigma) + "\n";
  out += "pe_enabled = " + std::string(spec.pe.enabled ? "1" : "0") + "\n";
  out += "pe_frequencies = " + std::to_string(spec.pe.num_frequencies) + "\n";
  out += "pe_base = " + fmt_double(spec.pe.base) + "\n";
  out += "input_dim = " + std::to_string(spec.input_dim) + "\n";
  out += "output_dim = " + std::to_string(spec.output_dim) + "\n";
  std::string widths;
  for (std::size_t h : spec.hidden_widths) widths += (widths.empty() ? "" : ",") + std::to_string(h);
  out += "hidden = " + widths + "\n";
  out += "init = " + init_scheme_name(spec.init) + "\n";
  out += "seed = " + std::to_string(spec.seed) + "\n";
  out += "signal = " + model.signal + "\n";
  out += "img_width = " + std::to_string(model.img_width) + "\n";
  out += "img_height = " + std::to_string(model.img_height) + "\n";
  out += "sample_rate = " + std::to_string(model.sample_rate) + "\n";
  out += "num_samples = " + std::to_string(model.num_samples) + "\n";
  out += "params = " + std::to_string(model.params.size()) + "\n";
  for (double v : model.params) {
    out += fmt_double(v);
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

inline ModelArtifact load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model '" + path + "'");
  ModelArtifact model;
  std::string line;
  std::size_t declared_params = 0;
  bool in_params = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (in_params) {
      model.params.push_back(std::strtod(line.c_str(), nullptr));
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ConfigError("model: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    if (key == "schema_version") {
      if (val != "1") throw ConfigError("model: unsupported schema version " + val);
    } else if (key == "activation") {
      if (val == "relu") model.spec.activation.kind = Activation::kReLU;
      else if (val == "tanh") model.spec.activation.kind = Activation::kTanh;
      else if (val == "sine") model.spec.activation.kind = Activation::kSine;
      else if (val == "gaussian") model.spec.activation.kind = Activation::kGaussian;
      else throw ConfigError("model: unknown activation '" + val + "'");
    } else if (key == "omega") model.spec.activation.omega = std::strtod(val.c_str(), nullptr);
    else if (key == "mu") model.spec.activation.mu = std::strtod(val.c_str(), nullptr);
    else if (key == "sigma") model.spec.activation.sigma = std::strtod(val.c_str(), nullptr);
    else if (key == "pe_enabled") model.spec.pe.enabled = (val == "1");
    else if (key == "pe_frequencies") model.spec.pe.num_frequencies = std::stoul(val);
    else if (key == "pe_base") model.spec.pe.base = std::strtod(val.c_str(), nullptr);
    else if (key == "input_dim") model.spec.input_dim = std::stoul(val);
    else if (key == "output_dim") model.spec.output_dim = std::stoul(val);
    else if (key == "hidden") {
      model.spec.hidden_widths.clear();
      std::stringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) model.spec.hidden_widths.push_back(std::stoul(tok));
    } else if (key == "init") model.spec.init = parse_init_scheme(val);
    else if (key == "seed") model.spec.seed = std::stoull(val);
    else if (key == "signal") model.signal = val;
    else if (key == "img_width") model.img_width = std::stoul(val);
    else if (key == "img_height") model.img_height = std::stoul(val);
    else if (key == "sample_rate") model.sample_rate = static_cast<std::uint32_t>(std::stoul(val));
    else if (key == "num_samples") model.num_samples = std::stoul(val);
    else if (key == "params") {
      declared_params = std::stoul(val);
      model.params.reserve(declared_params);
      in_params = true;
    } else {
      throw ConfigError("model: unknown key '" + key + "'");
    }
  }
  if (model.params.size() != declared_params)
    throw ConfigError("model: expected " + std::to_string(declared_params) + " parameters, found " +
                      std::to_string(model.params.size()));
  if (model.params.size() != model.spec.param_count())
    throw ConfigError("model: parameter count does not match the architecture");
  return model;
}

}  // namespace curvopt
