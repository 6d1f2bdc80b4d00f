#include <charconv>
#include <fstream>
#include <sstream>

#include "isbor/errors.hpp"
#include "isbor/trainer.hpp"

// Model file layout (version 1), one keyword per line:
//
//   format isbor-model
//   version 1
//   categories <r>
//   dimension <d>
//   theta <v>
//   sigma <v>
//   b1 <v>
//   deltas <r-2 values>
//   labels <r original label values>
//   scaler none | scaler <d means> <d scales>
//   basis <M>
//   <M lines: training index, w, alpha, d coordinates>
//   covariance
//   <M lines of M values>
//   end
//
// Reals use the shortest representation that round-trips exactly.

namespace isbor {
namespace {

constexpr int kFormatVersion = 1;

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  // Next non-empty line split into tokens.
  std::vector<std::string> next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(std::move(t));
      if (!tok.empty()) return tok;
    }
    throw ParseError(std::string("unexpected end of model file, expected ") + what, line_ + 1);
  }

  std::vector<std::string> keyed(const char* key, std::size_t n_values) {
    auto tok = next(key);
    if (tok[0] != key) fail(std::string("expected '") + key + "', found '" + tok[0] + "'");
    if (tok.size() != n_values + 1)
      fail(std::string("'") + key + "' needs " + std::to_string(n_values) + " value(s), found " +
           std::to_string(tok.size() - 1));
    tok.erase(tok.begin());
    return tok;
  }

  double real(const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("invalid number '" + s + "'");
    return v;
  }

  long long integer(const std::string& s) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("invalid integer '" + s + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_); }

 private:
  std::istringstream in_;
  std::size_t line_ = 0;
};

}  // namespace

std::string save_model(const ModelState& m) {
  std::ostringstream out;
  const Index d = m.dim();
  const int r = m.categories();
  out << "format isbor-model\n";
  out << "version " << kFormatVersion << '\n';
  out << "categories " << r << '\n';
  out << "dimension " << d << '\n';
  out << "theta " << fmt(m.kernel.theta) << '\n';
  out << "sigma " << fmt(m.sigma) << '\n';
  out << "b1 " << fmt(m.b.b1()) << '\n';
  out << "deltas";
  for (double v : m.b.deltas()) out << ' ' << fmt(v);
  out << "\nlabels";
  for (int k = 0; k < r; ++k)
    out << ' ' << (static_cast<int>(m.label_values.size()) == r ? m.label_values[k] : k + 1);
  out << '\n';
  if (m.scaler) {
    out << "scaler";
    for (Index k = 0; k < d; ++k) out << ' ' << fmt(m.scaler->mean[k]);
    for (Index k = 0; k < d; ++k) out << ' ' << fmt(m.scaler->scale[k]);
    out << '\n';
  } else {
    out << "scaler none\n";
  }
  out << "basis " << m.size() << '\n';
  for (Index k = 0; k < m.size(); ++k) {
    out << m.active[k] << ' ' << fmt(m.w[k]) << ' ' << fmt(m.alpha[k]);
    for (Index c = 0; c < d; ++c) out << ' ' << fmt(m.active_points(k, c));
    out << '\n';
  }
  out << "covariance\n";
  for (Index i = 0; i < m.sigma_post.rows(); ++i) {
    for (Index j = 0; j < m.sigma_post.cols(); ++j) out << (j ? " " : "") << fmt(m.sigma_post(i, j));
    out << '\n';
  }
  out << "end\n";
  return out.str();
}

ModelState load_model(const std::string& text) {
  Reader rd(text);
  ModelState m;
  if (rd.keyed("format", 1)[0] != "isbor-model") rd.fail("not an isbor model file");
  const long long version = rd.integer(rd.keyed("version", 1)[0]);
  if (version != kFormatVersion) rd.fail("unsupported model version " + std::to_string(version));
  const long long r = rd.integer(rd.keyed("categories", 1)[0]);
  if (r < 2) rd.fail("categories must be >= 2");
  const long long d = rd.integer(rd.keyed("dimension", 1)[0]);
  if (d < 1) rd.fail("dimension must be >= 1");
  m.kernel.theta = rd.real(rd.keyed("theta", 1)[0]);
  m.sigma = rd.real(rd.keyed("sigma", 1)[0]);
  if (!(m.sigma > 0.0)) rd.fail("sigma must be positive");
  const double b1 = rd.real(rd.keyed("b1", 1)[0]);
  std::vector<double> deltas;
  for (const auto& s : rd.keyed("deltas", static_cast<std::size_t>(r - 2))) deltas.push_back(rd.real(s));
  try {
    m.b = Thresholds(b1, std::move(deltas));
  } catch (const InputError& e) {
    rd.fail(e.what());
  }
  for (const auto& s : rd.keyed("labels", static_cast<std::size_t>(r))) m.label_values.push_back(rd.integer(s));

  auto sc = rd.next("scaler");
  if (sc[0] != "scaler") rd.fail("expected 'scaler', found '" + sc[0] + "'");
  if (!(sc.size() == 2 && sc[1] == "none")) {
    if (sc.size() != static_cast<std::size_t>(2 * d + 1)) rd.fail("scaler needs 2*dimension values");
    Scaler s;
    s.mean.resize(d);
    s.scale.resize(d);
    for (long long k = 0; k < d; ++k) {
      s.mean[k] = rd.real(sc[1 + k]);
      s.scale[k] = rd.real(sc[1 + d + k]);
    }
    m.scaler = std::move(s);
  }

  const long long n_basis = rd.integer(rd.keyed("basis", 1)[0]);
  if (n_basis < 1) rd.fail("model needs at least one basis");
  m.w.resize(n_basis);
  m.alpha.resize(n_basis);
  m.active_points.resize(n_basis, d);
  for (long long k = 0; k < n_basis; ++k) {
    const auto tok = rd.next("basis row");
    if (tok.size() != static_cast<std::size_t>(3 + d))
      rd.fail("basis row needs " + std::to_string(3 + d) + " values");
    m.active.push_back(rd.integer(tok[0]));
    m.w[k] = rd.real(tok[1]);
    m.alpha[k] = rd.real(tok[2]);
    for (long long c = 0; c < d; ++c) m.active_points(k, c) = rd.real(tok[3 + c]);
  }
  if (rd.next("covariance")[0] != "covariance") rd.fail("expected 'covariance'");
  m.sigma_post.resize(n_basis, n_basis);
  for (long long i = 0; i < n_basis; ++i) {
    const auto tok = rd.next("covariance row");
    if (tok.size() != static_cast<std::size_t>(n_basis)) rd.fail("covariance row needs M values");
    for (long long j = 0; j < n_basis; ++j) m.sigma_post(i, j) = rd.real(tok[j]);
  }
  if (rd.next("end")[0] != "end") rd.fail("expected 'end'");
  return m;
}

void save_model_file(const ModelState& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model file '" + path + "'");
  out << save_model(model);
  if (!out) throw InputError("failed writing model file '" + path + "'");
}

ModelState load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

}  // namespace isbor
