#include <fstream>
#include <sstream>

#include "muse/errors.hpp"
#include "muse/io.hpp"
#include "muse/trainer.hpp"

namespace muse {

namespace {

constexpr const char* kMagic = "muse-checkpoint 1";

std::string optional_size(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : "none";
}

void write_row(std::ostream& out, const char* tag, const Tensor& t) {
  out << tag;
  for (Index k = 0; k < t.size(); ++k) out << ' ' << format_double(t.data()[k]);
  out << '\n';
}

std::string body(const Checkpoint& c) {
  std::ostringstream out;
  out << kMagic << '\n';
  out << "model.facets " << c.model.facets << '\n'
      << "model.dim " << c.model.dim << '\n'
      << "model.orders " << c.model.orders << '\n'
      << "model.leaky_slope " << format_double(c.model.leaky_slope) << '\n'
      << "model.neighbor_cap " << optional_size(c.model.neighbor_cap) << '\n'
      << "model.share_attention " << (c.model.share_attention ? 1 : 0) << '\n';
  out << "train.epochs " << c.train.epochs << '\n'
      << "train.learning_rate " << format_double(c.train.learning_rate) << '\n'
      << "train.lambda " << format_double(c.train.lambda) << '\n'
      << "train.batch_edges " << optional_size(c.train.batch_edges) << '\n'
      << "train.seed " << c.train.seed << '\n'
      << "train.beta1 " << format_double(c.train.adam.beta1) << '\n'
      << "train.beta2 " << format_double(c.train.adam.beta2) << '\n'
      << "train.epsilon " << format_double(c.train.adam.epsilon) << '\n'
      << "train.granularity " << to_string(c.train.granularity) << '\n';
  out << "epochs_done " << c.epochs_done << '\n';
  for (const auto& [k, v] : c.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw FormatError("checkpoint meta '" + k + "' cannot be stored on one line");
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& s : c.history)
    out << "history " << s.epoch << ' ' << format_double(s.total) << ' '
        << format_double(s.structure) << ' ' << format_double(s.sign) << '\n';
  for (const auto& [name, p] : c.params) {
    out << "param " << name << ' ' << p.value.rows() << ' ' << p.value.cols() << ' ' << p.step
        << '\n';
    write_row(out, "value", p.value);
    write_row(out, "m", p.m);
    write_row(out, "v", p.v);
  }
  return out.str();
}

struct Lines {
  std::istringstream in;
  std::size_t line_no = 0;

  explicit Lines(const std::string& text) : in(text) {}

  std::vector<std::string> next() {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("checkpoint: unexpected end of file");
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> t;
    if (line.rfind("meta ", 0) == 0) {
      // Values may contain spaces.
      std::string tag, key;
      ss >> tag >> key;
      std::string rest;
      std::getline(ss, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      return {tag, key, rest};
    }
    for (std::string tok; ss >> tok;) t.push_back(tok);
    return t;
  }
  bool done() { return in.peek() == std::char_traits<char>::eof(); }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError("checkpoint: " + what, line_no); }
};

template <typename T>
T parse_int(const std::string& s, Lines& lines) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) lines.fail("bad integer '" + s + "'");
    return static_cast<T>(v);
  } catch (const std::logic_error&) {
    lines.fail("bad integer '" + s + "'");
  }
}

std::optional<std::size_t> parse_optional(const std::string& s, Lines& lines) {
  if (s == "none") return std::nullopt;
  return parse_int<std::size_t>(s, lines);
}

std::string expect(Lines& lines, const std::string& key) {
  const auto t = lines.next();
  if (t.size() != 2 || t[0] != key) lines.fail("expected '" + key + " <value>'");
  return t[1];
}

Tensor read_row(Lines& lines, const char* tag, Index rows, Index cols) {
  const auto t = lines.next();
  if (t.empty() || t[0] != tag || static_cast<Index>(t.size()) != rows * cols + 1)
    lines.fail(std::string("expected ") + tag + " row with " + std::to_string(rows * cols) +
               " values");
  Tensor out(rows, cols);
  for (Index k = 0; k < rows * cols; ++k)
    out.data()[k] = parse_double(t[static_cast<std::size_t>(k) + 1], tag);
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const auto text = body(ckpt);
  out << text << "sha256 " << sha256_hex(text) << '\n';
  if (!out) throw FormatError("checkpoint: write failed");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  save_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  const auto trailer = text.rfind("sha256 ");
  if (trailer == std::string::npos || (trailer > 0 && text[trailer - 1] != '\n'))
    throw IntegrityError("checkpoint: missing digest trailer");
  std::string digest = text.substr(trailer + 7);
  while (!digest.empty() && (digest.back() == '\n' || digest.back() == '\r')) digest.pop_back();
  const std::string content = text.substr(0, trailer);
  if (sha256_hex(content) != digest) throw IntegrityError("checkpoint: digest mismatch");

  Lines lines(content);
  const auto magic = lines.next();
  if (magic.size() != 2 || magic[0] + " " + magic[1] != kMagic)
    lines.fail("unsupported header, expected '" + std::string(kMagic) + "'");

  Checkpoint c;
  c.model.facets = parse_int<int>(expect(lines, "model.facets"), lines);
  c.model.dim = parse_int<int>(expect(lines, "model.dim"), lines);
  c.model.orders = parse_int<int>(expect(lines, "model.orders"), lines);
  c.model.leaky_slope = parse_double(expect(lines, "model.leaky_slope"), "leaky_slope");
  c.model.neighbor_cap = parse_optional(expect(lines, "model.neighbor_cap"), lines);
  c.model.share_attention = expect(lines, "model.share_attention") == "1";
  c.train.epochs = parse_int<int>(expect(lines, "train.epochs"), lines);
  c.train.learning_rate = parse_double(expect(lines, "train.learning_rate"), "learning_rate");
  c.train.lambda = parse_double(expect(lines, "train.lambda"), "lambda");
  c.train.batch_edges = parse_optional(expect(lines, "train.batch_edges"), lines);
  c.train.seed = std::stoull(expect(lines, "train.seed"));
  c.train.adam.beta1 = parse_double(expect(lines, "train.beta1"), "beta1");
  c.train.adam.beta2 = parse_double(expect(lines, "train.beta2"), "beta2");
  c.train.adam.epsilon = parse_double(expect(lines, "train.epsilon"), "epsilon");
  c.train.granularity = parse_granularity(expect(lines, "train.granularity"));
  c.epochs_done = parse_int<int>(expect(lines, "epochs_done"), lines);

  while (!lines.done()) {
    const auto t = lines.next();
    if (t.empty()) continue;
    if (t[0] == "meta" && t.size() == 3) {
      c.meta[t[1]] = t[2];
    } else if (t[0] == "history" && t.size() == 5) {
      c.history.push_back({parse_int<int>(t[1], lines), parse_double(t[2], "history"),
                           parse_double(t[3], "history"), parse_double(t[4], "history")});
    } else if (t[0] == "param" && t.size() == 5) {
      const auto rows = parse_int<Index>(t[2], lines);
      const auto cols = parse_int<Index>(t[3], lines);
      ParamEntry e;
      e.step = parse_int<std::int64_t>(t[4], lines);
      e.value = read_row(lines, "value", rows, cols);
      e.m = read_row(lines, "m", rows, cols);
      e.v = read_row(lines, "v", rows, cols);
      e.grad = Tensor::Zero(rows, cols);
      c.params.restore(t[1], std::move(e));
    } else {
      lines.fail("unrecognised record '" + t[0] + "'");
    }
  }
  c.model.validate();
  c.train.validate();
  return c;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace muse
