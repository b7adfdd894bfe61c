#include "macrogpo/environment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "macrogpo/errors.hpp"

namespace macrogpo {

// ---------------------------------------------------------------- GridDomain

GridDomain::GridDomain(std::vector<GridAxis> axes, std::vector<bool> accessible)
    : axes_(std::move(axes)), mask_(std::move(accessible)) {
  if (axes_.empty()) throw InvalidInput("grid needs at least one axis");
  for (const auto& a : axes_) {
    if (a.cells < 1) throw InvalidInput("grid axis needs at least one cell");
    if (!(a.max > a.min)) throw InvalidInput("grid axis needs max > min");
  }
  if (!mask_.empty() && mask_.size() != cell_count())
    throw InvalidInput("accessibility mask does not match grid shape");
}

std::size_t GridDomain::cell_count() const {
  std::size_t n = 1;
  for (const auto& a : axes_) n *= static_cast<std::size_t>(a.cells);
  return n;
}

Location GridDomain::location(std::span<const int> index) const {
  std::vector<double> c(axes_.size());
  for (std::size_t d = 0; d < axes_.size(); ++d) c[d] = axes_[d].min + (index[d] + 0.5) * axes_[d].width();
  return Location(std::move(c));
}

Location GridDomain::location(std::size_t flat) const {
  std::vector<int> idx(axes_.size());
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    idx[d] = static_cast<int>(flat % static_cast<std::size_t>(axes_[d].cells));
    flat /= static_cast<std::size_t>(axes_[d].cells);
  }
  return location(idx);
}

std::optional<std::vector<int>> GridDomain::index_of(const Location& loc) const {
  if (loc.dimension() != axes_.size()) return std::nullopt;
  std::vector<int> idx(axes_.size());
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    const double u = (loc[d] - axes_[d].min) / axes_[d].width() - 0.5;
    const double r = std::round(u);
    if (std::abs(u - r) > 1e-6) return std::nullopt;
    idx[d] = static_cast<int>(r);
  }
  if (!inside(idx)) return std::nullopt;
  return idx;
}

std::size_t GridDomain::flat_index(std::span<const int> index) const {
  std::size_t flat = 0;
  for (std::size_t d = axes_.size(); d-- > 0;) flat = flat * static_cast<std::size_t>(axes_[d].cells) + index[d];
  return flat;
}

bool GridDomain::inside(std::span<const int> index) const {
  for (std::size_t d = 0; d < axes_.size(); ++d)
    if (index[d] < 0 || index[d] >= axes_[d].cells) return false;
  return true;
}

bool GridDomain::accessible(std::span<const int> index) const {
  if (!inside(index)) return false;
  return mask_.empty() || mask_[flat_index(index)];
}

std::vector<Location> GridDomain::accessible_cells() const {
  std::vector<Location> out;
  const std::size_t n = cell_count();
  out.reserve(n);
  for (std::size_t f = 0; f < n; ++f)
    if (mask_.empty() || mask_[f]) out.push_back(location(f));
  return out;
}

Location GridDomain::centre_cell() const {
  std::vector<int> idx(axes_.size());
  for (std::size_t d = 0; d < axes_.size(); ++d) idx[d] = axes_[d].cells / 2;
  return location(idx);
}

// ---------------------------------------------------------------- Graph

std::size_t Graph::add_node(const Location& loc) {
  if (auto it = index_.find(loc); it != index_.end()) return it->second;
  nodes_.push_back(loc);
  adjacency_.emplace_back();
  index_.emplace(loc, nodes_.size() - 1);
  return nodes_.size() - 1;
}

void Graph::add_edge(const Location& from, const Location& to) {
  const std::size_t a = add_node(from);
  const std::size_t b = add_node(to);
  auto& adj = adjacency_[a];
  if (std::find(adj.begin(), adj.end(), b) == adj.end()) adj.push_back(b);
}

std::optional<std::size_t> Graph::find(const Location& loc) const {
  if (auto it = index_.find(loc); it != index_.end()) return it->second;
  return std::nullopt;
}

std::size_t Graph::edge_count() const {
  std::size_t n = 0;
  for (const auto& adj : adjacency_) n += adj.size();
  return n;
}

// ---------------------------------------------------------------- catalog

void MacroActionCatalog::set(const Location& anchor, std::vector<MacroAction> actions) {
  for (const auto& a : actions) {
    if (a.path.empty()) throw InvalidInput("macro-action with empty path");
    if (kappa_ == 0) kappa_ = a.length();
    if (a.length() != kappa_) throw InvalidInput("macro-actions in one catalog must share kappa");
  }
  max_actions_ = std::max(max_actions_, actions.size());
  by_anchor_[anchor] = std::move(actions);
}

const std::vector<MacroAction>& MacroActionCatalog::at(const Location& anchor) const {
  static const std::vector<MacroAction> none;
  auto it = by_anchor_.find(anchor);
  return it == by_anchor_.end() ? none : it->second;
}

// ---------------------------------------------------------------- realization

PhenomenonRealization::PhenomenonRealization(std::vector<Location> cells, std::vector<double> values,
                                             Provenance provenance, std::uint64_t seed)
    : cells_(std::move(cells)), values_(std::move(values)), provenance_(provenance), seed_(seed) {
  if (cells_.size() != values_.size()) throw InvalidInput("field cells and values differ in length");
  if (cells_.empty()) throw InvalidInput("field has no cells");
  index_.reserve(cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (!index_.emplace(cells_[i], i).second) throw InvalidInput("duplicate cell in field");
  }
  argmax_ = static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) - values_.begin());
  max_value_ = values_[argmax_];
}

std::optional<double> PhenomenonRealization::value_at(const Location& loc) const {
  if (auto it = index_.find(loc); it != index_.end()) return values_[it->second];
  return std::nullopt;
}

double PhenomenonRealization::at(const Location& loc) const {
  auto v = value_at(loc);
  if (!v) throw InvalidInput("location is not an accessible cell of the field");
  return *v;
}

// ---------------------------------------------------------------- sampling

namespace {

// Symmetric square root U sqrt(max(D, 0)) of a PSD matrix.
Eigen::MatrixXd psd_root(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of prior gram failed");
  Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

PhenomenonRealization sample_phenomenon(std::span<const Location> cells, const KernelParams& params,
                                        std::uint64_t seed) {
  params.validate();
  if (cells.size() > kDenseSamplingCap)
    throw CapabilityError("dense field sampling over " + std::to_string(cells.size()) +
                          " cells exceeds the cap; sample blockwise or sequentially");
  Rng rng = make_rng(seed);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(cells.size()), 1);
  standard_normal_fill(z, rng);
  std::vector<double> values(cells.size(), params.prior_mean);
  if (params.signal_variance > 0.0) {
    Eigen::VectorXd f = psd_root(cross_covariance(cells, cells, params)) * z.col(0);
    for (std::size_t i = 0; i < cells.size(); ++i) values[i] += f(static_cast<Eigen::Index>(i));
  }
  return {std::vector<Location>(cells.begin(), cells.end()), std::move(values),
          PhenomenonRealization::Provenance::sampled, seed};
}

PhenomenonRealization sample_phenomenon(const GridDomain& domain, const KernelParams& params,
                                        std::uint64_t seed) {
  params.validate();
  if (params.length_scales.size() != domain.dimension())
    throw InvalidInput("kernel dimension does not match domain");
  if (domain.has_mask()) {
    auto cells = domain.accessible_cells();
    return sample_phenomenon(cells, params, seed);
  }

  // The SE kernel factorises over axes, so on a full grid K = sigma^2 (x) K_d.
  const std::size_t dims = domain.dimension();
  const std::size_t n = domain.cell_count();
  Rng rng = make_rng(seed);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), 1);
  standard_normal_fill(z, rng);
  std::vector<double> field(z.data(), z.data() + n);

  std::size_t stride = 1;
  for (std::size_t d = 0; d < dims; ++d) {
    const auto& axis = domain.axes()[d];
    const int m = axis.cells;
    Eigen::MatrixXd k(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double u = (i - j) * axis.width() / params.length_scales[d];
        k(i, j) = std::exp(-0.5 * u * u);
      }
    const Eigen::MatrixXd root = psd_root(k);
    const std::size_t block = stride * static_cast<std::size_t>(m);
    Eigen::VectorXd fibre(m), mixed(m);
    for (std::size_t outer = 0; outer < n; outer += block) {
      for (std::size_t inner = 0; inner < stride; ++inner) {
        for (int i = 0; i < m; ++i) fibre(i) = field[outer + inner + i * stride];
        mixed.noalias() = root * fibre;
        for (int i = 0; i < m; ++i) field[outer + inner + i * stride] = mixed(i);
      }
    }
    stride = block;
  }

  const double scale = std::sqrt(params.signal_variance);
  std::vector<Location> cells;
  cells.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    cells.push_back(domain.location(f));
    field[f] = params.prior_mean + scale * field[f];
  }
  return {std::move(cells), std::move(field), PhenomenonRealization::Provenance::sampled, seed};
}

// ---------------------------------------------------------------- macro-actions

std::vector<MacroAction> cardinal_macro_actions(const Location& start, const GridDomain& domain,
                                                std::size_t kappa) {
  if (kappa == 0) throw InvalidInput("kappa must be at least 1");
  auto origin = domain.index_of(start);
  if (!origin || !domain.accessible(*origin)) throw InvalidInput("start location is not an accessible cell");
  std::vector<MacroAction> out;
  for (int dir : {+1, -1}) {
    for (std::size_t d = 0; d < domain.dimension(); ++d) {
      MacroAction action;
      std::vector<int> idx = *origin;
      bool ok = true;
      for (std::size_t step = 0; step < kappa && ok; ++step) {
        idx[d] += dir;
        ok = domain.accessible(idx);
        if (ok) action.path.push_back(domain.location(idx));
      }
      if (ok) out.push_back(std::move(action));
    }
  }
  return out;
}

namespace {

void enumerate_walks(const Graph& g, std::size_t node, std::size_t kappa, std::vector<std::size_t>& stack,
                     std::vector<char>& on_path, std::vector<std::vector<std::size_t>>& out) {
  if (stack.size() == kappa) {
    out.push_back(stack);
    return;
  }
  for (std::size_t next : g.neighbours(node)) {
    if (on_path[next]) continue;
    on_path[next] = 1;
    stack.push_back(next);
    enumerate_walks(g, next, kappa, stack, on_path, out);
    stack.pop_back();
    on_path[next] = 0;
  }
}

}  // namespace

std::vector<MacroAction> graph_macro_actions(const Location& start, const Graph& graph, std::size_t kappa,
                                             std::optional<Downsample> downsample) {
  if (kappa == 0) throw InvalidInput("kappa must be at least 1");
  auto origin = graph.find(start);
  if (!origin) throw InvalidInput("start location is not a graph node");
  std::vector<std::vector<std::size_t>> walks;
  std::vector<std::size_t> stack;
  std::vector<char> on_path(graph.size(), 0);
  on_path[*origin] = 1;
  enumerate_walks(graph, *origin, kappa, stack, on_path, walks);

  std::vector<std::size_t> keep(walks.size());
  std::iota(keep.begin(), keep.end(), 0);
  if (downsample && downsample->count < walks.size()) {
    Rng rng = make_rng(downsample->seed);
    for (std::size_t i = 0; i < downsample->count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, keep.size() - 1);
      std::swap(keep[i], keep[pick(rng)]);
    }
    keep.resize(downsample->count);
    std::sort(keep.begin(), keep.end());
  }

  std::vector<MacroAction> out;
  out.reserve(keep.size());
  for (std::size_t w : keep) {
    MacroAction a;
    for (std::size_t node : walks[w]) a.path.push_back(graph.nodes()[node]);
    out.push_back(std::move(a));
  }
  return out;
}

MacroActionCatalog cardinal_catalog(const GridDomain& domain, std::size_t kappa) {
  MacroActionCatalog catalog(CatalogRule::cardinal_dives);
  for (const auto& cell : domain.accessible_cells()) catalog.set(cell, cardinal_macro_actions(cell, domain, kappa));
  return catalog;
}

MacroActionCatalog graph_catalog(const Graph& graph, std::size_t kappa, std::optional<Downsample> downsample) {
  MacroActionCatalog catalog(CatalogRule::graph_paths);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    std::optional<Downsample> per_node;
    if (downsample) per_node = Downsample{downsample->count, derive_seed(downsample->seed, {i})};
    catalog.set(graph.nodes()[i], graph_macro_actions(graph.nodes()[i], graph, kappa, per_node));
  }
  return catalog;
}

Eigen::VectorXd execute(const PhenomenonRealization& field, const MacroAction& action, double noise_variance,
                        Rng& rng) {
  if (noise_variance < 0.0) throw InvalidInput("noise variance must be nonnegative");
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sd = std::sqrt(noise_variance);
  Eigen::VectorXd z(static_cast<Eigen::Index>(action.length()));
  for (std::size_t i = 0; i < action.length(); ++i) {
    const double y = field.at(action.path[i]);
    const double e = noise(rng);
    z(static_cast<Eigen::Index>(i)) = y + sd * e;
  }
  return z;
}

// ---------------------------------------------------------------- file formats

namespace {

std::vector<std::string> coordinate_names(std::size_t dims, const std::string& prefix) {
  static const char* named[] = {"x", "y", "z"};
  std::vector<std::string> out;
  for (std::size_t d = 0; d < dims; ++d)
    out.push_back(prefix + (dims <= 3 ? std::string(named[d]) : "c" + std::to_string(d)));
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, const std::string& source, std::size_t line) {
  if (text.empty()) throw ParseError(source, line, "empty field");
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(v))
    throw ParseError(source, line, "not a finite number: '" + text + "'");
  return v;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_numeric_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidInput("cannot open " + file.string());
  const std::string source = file.string();
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cells = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError(source, line_no,
                       "expected " + std::to_string(t.header.size()) + " columns, got " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_number(c, source, line_no));
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw ParseError(source, line_no, "missing header");
  return t;
}

std::size_t expect_point_header(const CsvTable& t, const std::filesystem::path& file) {
  if (t.header.size() < 2 || t.header.back() != "value")
    throw ParseError(file.string(), 1, "header must list coordinates followed by 'value'");
  const std::size_t dims = t.header.size() - 1;
  const auto names = coordinate_names(dims, "");
  for (std::size_t d = 0; d < dims; ++d)
    if (t.header[d] != names[d]) throw ParseError(file.string(), 1, "unexpected column '" + t.header[d] + "'");
  return dims;
}

}  // namespace

PhenomenonRealization load_field(const std::filesystem::path& file) {
  const CsvTable t = read_numeric_csv(file);
  const std::size_t dims = expect_point_header(t, file);
  std::vector<Location> cells;
  std::vector<double> values;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    cells.emplace_back(std::vector<double>(t.rows[r].begin(), t.rows[r].begin() + dims));
    values.push_back(t.rows[r][dims]);
  }
  if (cells.empty()) throw ParseError(file.string(), 1, "field file has no rows");
  try {
    return {std::move(cells), std::move(values), PhenomenonRealization::Provenance::loaded};
  } catch (const InvalidInput& e) {
    throw ParseError(file.string(), 0, e.what());
  }
}

void save_field(const PhenomenonRealization& field, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw InvalidInput("cannot write " + file.string());
  const std::size_t dims = field.cells().front().dimension();
  for (const auto& n : coordinate_names(dims, "")) out << n << ',';
  out << "value\n";
  for (std::size_t i = 0; i < field.cells().size(); ++i) {
    for (double c : field.cells()[i].coords) out << format_number(c) << ',';
    out << format_number(field.values()[i]) << '\n';
  }
}

Graph load_graph(const std::filesystem::path& file) {
  const CsvTable t = read_numeric_csv(file);
  if (t.header.size() % 2 != 0 || t.header.empty())
    throw ParseError(file.string(), 1, "graph header must have from_* and to_* columns");
  const std::size_t dims = t.header.size() / 2;
  const auto from = coordinate_names(dims, "from_");
  const auto to = coordinate_names(dims, "to_");
  for (std::size_t d = 0; d < dims; ++d)
    if (t.header[d] != from[d] || t.header[dims + d] != to[d])
      throw ParseError(file.string(), 1, "unexpected graph header");
  Graph g;
  for (const auto& row : t.rows) {
    Location a(std::vector<double>(row.begin(), row.begin() + dims));
    Location b(std::vector<double>(row.begin() + dims, row.end()));
    g.add_edge(a, b);
  }
  return g;
}

void save_graph(const Graph& graph, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw InvalidInput("cannot write " + file.string());
  if (graph.size() == 0) throw InvalidInput("cannot save an empty graph");
  const std::size_t dims = graph.nodes().front().dimension();
  auto from = coordinate_names(dims, "from_");
  auto to = coordinate_names(dims, "to_");
  for (const auto& n : from) out << n << ',';
  for (std::size_t d = 0; d < dims; ++d) out << to[d] << (d + 1 < dims ? ',' : '\n');
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j : graph.neighbours(i)) {
      for (double c : graph.nodes()[i].coords) out << format_number(c) << ',';
      const auto& b = graph.nodes()[j].coords;
      for (std::size_t d = 0; d < b.size(); ++d) out << format_number(b[d]) << (d + 1 < b.size() ? ',' : '\n');
    }
  }
}

ObservationSet load_observations(const std::filesystem::path& file) {
  const CsvTable t = read_numeric_csv(file);
  const std::size_t dims = expect_point_header(t, file);
  ObservationSet data;
  for (const auto& row : t.rows)
    data.append(Location(std::vector<double>(row.begin(), row.begin() + dims)), row[dims]);
  return data;
}

}  // namespace macrogpo
