#include "sprk/tableau.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace sprk {

RkTableau::RkTableau(std::string n, Mat a_, Vec b_, Vec c_)
    : name(std::move(n)), s(static_cast<int>(b_.size())),
      a(std::move(a_)), b(std::move(b_)), c(std::move(c_)) {
  if (a.rows() != s || a.cols() != s || c.size() != s)
    throw Error("tableau " + name + ": inconsistent dimensions");
}

bool RkTableau::explicit_stages() const {
  for (int i = 0; i < s; ++i)
    for (int j = i; j < s; ++j)
      if (a(i, j) != 0.0) return false;
  return true;
}

SymplecticnessReport symplectic_defect(const RkTableau& tab) {
  SymplecticnessReport rep;
  rep.coupling.resize(tab.s, tab.s);
  for (int i = 0; i < tab.s; ++i)
    for (int j = 0; j < tab.s; ++j)
      rep.coupling(i, j) =
          tab.b(i) * tab.a(i, j) + tab.b(j) * tab.a(j, i) - tab.b(i) * tab.b(j);
  rep.max_defect = rep.coupling.cwiseAbs().maxCoeff();
  rep.max_defect_full = rep.max_defect;
  return rep;
}

SymplecticnessReport symplectic_defect(const PrkTableau& ptab) {
  const RkTableau& lo = ptab.lower;
  const RkTableau& up = ptab.upper;
  if (lo.s != up.s) throw Error("pair " + ptab.name + ": stage counts differ");
  SymplecticnessReport rep;
  rep.coupling.resize(lo.s, lo.s);
  for (int i = 0; i < lo.s; ++i)
    for (int j = 0; j < lo.s; ++j)
      rep.coupling(i, j) =
          lo.b(i) * up.a(i, j) + up.b(j) * lo.a(j, i) - lo.b(i) * up.b(j);
  rep.weight_defect = lo.b - up.b;
  rep.abscissa_defect = lo.c - up.c;
  rep.max_defect = std::max(rep.coupling.cwiseAbs().maxCoeff(),
                            rep.weight_defect.cwiseAbs().maxCoeff());
  rep.max_defect_full =
      std::max(rep.max_defect, rep.abscissa_defect.cwiseAbs().maxCoeff());
  return rep;
}

RkTableau reflect(const RkTableau& tab) {
  Mat a(tab.s, tab.s);
  for (int i = 0; i < tab.s; ++i)
    for (int j = 0; j < tab.s; ++j) a(i, j) = tab.b(j) - tab.a(i, j);
  Vec c = Vec::Ones(tab.s) - tab.c;
  return RkTableau(tab.name.empty() ? "" : tab.name + "^r", std::move(a), tab.b,
                   std::move(c));
}

RkTableau transpose(const RkTableau& tab) {
  for (int i = 0; i < tab.s; ++i)
    if (tab.b(i) == 0.0) throw ZeroWeight(i);
  Mat a(tab.s, tab.s);
  for (int i = 0; i < tab.s; ++i)
    for (int j = 0; j < tab.s; ++j) a(i, j) = tab.b(j) * tab.a(j, i) / tab.b(i);
  Vec c = Vec::Ones(tab.s) - tab.c;
  return RkTableau(tab.name.empty() ? "" : tab.name + "^t", std::move(a), tab.b,
                   std::move(c));
}

PrkTableau adjoint_partner(const RkTableau& tab) {
  for (int i = 0; i < tab.s; ++i)
    if (tab.b(i) == 0.0) throw ZeroWeight(i);
  Mat A(tab.s, tab.s);
  for (int i = 0; i < tab.s; ++i)
    for (int j = 0; j < tab.s; ++j)
      A(i, j) = tab.b(j) - tab.b(j) * tab.a(j, i) / tab.b(i);
  PrkTableau pair;
  pair.name = tab.name + "+partner";
  pair.lower = tab;
  pair.upper = RkTableau(tab.name + "^rt", std::move(A), tab.b, tab.c);
  return pair;
}

OrderResiduals order_residuals(const RkTableau& tab) {
  const Mat& a = tab.a;
  const Vec& b = tab.b;
  OrderResiduals out;
  out.emplace_back("order 1: sum b_i", b.sum() - 1.0);
  out.emplace_back("order 2: b_i a_ij", b.dot(a * Vec::Ones(tab.s)) - 0.5);
  Vec arow = a * Vec::Ones(tab.s);
  out.emplace_back("order 3 chain: b_i a_ij a_jk", b.dot(a * arow) - 1.0 / 6.0);
  out.emplace_back("order 3 bushy: b_i (a_ij)(a_ik)",
                   b.dot(arow.cwiseProduct(arow)) - 1.0 / 3.0);
  for (int i = 0; i < tab.s; ++i)
    out.emplace_back("abscissa c_" + std::to_string(i + 1) + " - row sum",
                     tab.c(i) - arow(i));
  return out;
}

OrderResiduals order_residuals(const PrkTableau& ptab) {
  const RkTableau& lo = ptab.lower;
  const RkTableau& up = ptab.upper;
  if (lo.s != up.s) throw Error("pair " + ptab.name + ": stage counts differ");
  Vec ones = Vec::Ones(lo.s);
  OrderResiduals out;
  out.emplace_back("order 1: sum b_i", lo.b.sum() - 1.0);
  out.emplace_back("order 1: sum B_i", up.b.sum() - 1.0);
  out.emplace_back("order 2: b_i a_ij", lo.b.dot(lo.a * ones) - 0.5);
  out.emplace_back("order 2: b_i A_ij", lo.b.dot(up.a * ones) - 0.5);
  out.emplace_back("order 2: B_i a_ij", up.b.dot(lo.a * ones) - 0.5);
  out.emplace_back("order 2: B_i A_ij", up.b.dot(up.a * ones) - 0.5);
  return out;
}

namespace {

RkTableau make_euler() {
  return RkTableau("euler", Mat::Zero(1, 1), Vec::Ones(1), Vec::Zero(1));
}

RkTableau make_implicit_euler() {
  return RkTableau("implicit-euler", Mat::Ones(1, 1), Vec::Ones(1), Vec::Ones(1));
}

RkTableau make_midpoint() {
  Mat a(1, 1);
  a << 0.5;
  Vec c(1);
  c << 0.5;
  return RkTableau("midpoint", a, Vec::Ones(1), c);
}

RkTableau make_gauss2() {
  const double r = std::sqrt(3.0) / 6.0;
  Mat a(2, 2);
  a << 0.25, 0.25 - r, 0.25 + r, 0.25;
  Vec b(2), c(2);
  b << 0.5, 0.5;
  c << 0.5 - r, 0.5 + r;
  return RkTableau("gauss2", a, b, c);
}

RkTableau make_radau_ia1() {
  // one stage, A = 1, C = 0; pairs with explicit Euler
  return RkTableau("radau-ia1", Mat::Ones(1, 1), Vec::Ones(1), Vec::Zero(1));
}

RkTableau make_rk4() {
  Mat a = Mat::Zero(4, 4);
  a(1, 0) = 0.5;
  a(2, 1) = 0.5;
  a(3, 2) = 1.0;
  Vec b(4), c(4);
  b << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0;
  c << 0.0, 0.5, 0.5, 1.0;
  return RkTableau("rk4", a, b, c);
}

RkTableau make_runge1895() {
  // two stages, b_2 = 0: the update only reads the midpoint slope
  Mat a = Mat::Zero(2, 2);
  a(0, 1) = 0.5;
  Vec b(2), c(2);
  b << 1.0, 0.0;
  c << 0.5, 0.0;
  return RkTableau("runge1895", a, b, c);
}

PrkTableau make_verlet() {
  Mat alo(2, 2), aup(2, 2);
  alo << 0.0, 0.0, 0.5, 0.5;  // trapezoidal
  aup << 0.5, 0.0, 0.5, 0.0;
  Vec b(2), c(2);
  b << 0.5, 0.5;
  c << 0.0, 1.0;
  PrkTableau pair;
  pair.name = "verlet";
  pair.lower = RkTableau("verlet-q", alo, b, c);
  pair.upper = RkTableau("verlet-p", aup, b, c);
  return pair;
}

}  // namespace

const std::vector<std::string>& catalog_rk() {
  static const std::vector<std::string> names = {
      "euler",     "implicit-euler", "midpoint", "gauss2",
      "radau-ia1", "rk4",            "runge1895"};
  return names;
}

const std::vector<std::string>& catalog_prk() {
  static const std::vector<std::string> names = {"verlet"};
  return names;
}

RkTableau builtin_rk(const std::string& name) {
  if (name == "euler") return make_euler();
  if (name == "implicit-euler") return make_implicit_euler();
  if (name == "midpoint") return make_midpoint();
  if (name == "gauss2") return make_gauss2();
  if (name == "radau-ia1") return make_radau_ia1();
  if (name == "rk4") return make_rk4();
  if (name == "runge1895") return make_runge1895();
  throw UnknownTableau(name);
}

PrkTableau builtin_prk(const std::string& name) {
  if (name == "verlet") return make_verlet();
  throw UnknownTableau(name);
}

std::variant<RkTableau, PrkTableau> builtin(const std::string& name) {
  for (const auto& n : catalog_prk())
    if (n == name) return builtin_prk(name);
  return builtin_rk(name);
}

RkTableau random_symplectic(int s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> weight(0.3, 1.0);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  Vec b(s);
  for (int i = 0; i < s; ++i) b(i) = weight(rng);
  b /= b.sum();
  Mat a = Mat::Zero(s, s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < i; ++j) a(i, j) = entry(rng);
    a(i, i) = 0.5 * b(i);
    // defect equation pins the mirror entry
    for (int j = 0; j < i; ++j) a(j, i) = b(i) - b(i) * a(i, j) / b(j);
  }
  Vec c = a * Vec::Ones(s);
  return RkTableau("random-symplectic-s" + std::to_string(s) + "-" +
                       std::to_string(seed),
                   a, b, c);
}

namespace {

nlohmann::json rk_to_json_obj(const RkTableau& tab) {
  nlohmann::json j;
  j["name"] = tab.name;
  j["s"] = tab.s;
  std::vector<double> a;
  a.reserve(static_cast<std::size_t>(tab.s) * tab.s);
  for (int i = 0; i < tab.s; ++i)
    for (int k = 0; k < tab.s; ++k) a.push_back(tab.a(i, k));
  j["a"] = a;
  j["b"] = std::vector<double>(tab.b.data(), tab.b.data() + tab.s);
  j["c"] = std::vector<double>(tab.c.data(), tab.c.data() + tab.s);
  return j;
}

RkTableau rk_from_json_obj(const nlohmann::json& j) {
  const int s = j.at("s").get<int>();
  auto av = j.at("a").get<std::vector<double>>();
  auto bv = j.at("b").get<std::vector<double>>();
  auto cv = j.at("c").get<std::vector<double>>();
  if (static_cast<int>(av.size()) != s * s || static_cast<int>(bv.size()) != s ||
      static_cast<int>(cv.size()) != s)
    throw Error("tableau JSON: array lengths do not match s");
  Mat a(s, s);
  for (int i = 0; i < s; ++i)
    for (int k = 0; k < s; ++k) a(i, k) = av[static_cast<std::size_t>(i) * s + k];
  Vec b = Eigen::Map<Vec>(bv.data(), s);
  Vec c = Eigen::Map<Vec>(cv.data(), s);
  return RkTableau(j.value("name", std::string()), a, b, c);
}

}  // namespace

std::string to_json(const RkTableau& tab, int indent) {
  return rk_to_json_obj(tab).dump(indent);
}

std::string to_json(const PrkTableau& ptab, int indent) {
  nlohmann::json j;
  j["name"] = ptab.name;
  j["lower"] = rk_to_json_obj(ptab.lower);
  j["upper"] = rk_to_json_obj(ptab.upper);
  return j.dump(indent);
}

RkTableau rk_from_json(const std::string& text) {
  return rk_from_json_obj(nlohmann::json::parse(text));
}

PrkTableau prk_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  PrkTableau pair;
  pair.name = j.value("name", std::string());
  pair.lower = rk_from_json_obj(j.at("lower"));
  pair.upper = rk_from_json_obj(j.at("upper"));
  return pair;
}

std::variant<RkTableau, PrkTableau> load_tableau(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tableau file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  auto j = nlohmann::json::parse(buf.str());
  if (j.contains("lower")) return prk_from_json(buf.str());
  return rk_from_json(buf.str());
}

std::variant<RkTableau, PrkTableau> resolve_tableau(const std::string& id) {
  for (const auto& n : catalog_rk())
    if (n == id) return builtin_rk(id);
  for (const auto& n : catalog_prk())
    if (n == id) return builtin_prk(id);
  if (id.find('.') != std::string::npos || id.find('/') != std::string::npos)
    return load_tableau(id);
  throw UnknownTableau(id);
}

}  // namespace sprk
