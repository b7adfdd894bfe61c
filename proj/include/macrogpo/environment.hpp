#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "macrogpo/gp.hpp"

namespace macrogpo {

struct GridAxis {
  double min = 0.0;
  double max = 1.0;
  int cells = 1;

  double width() const { return (max - min) / cells; }
};

/// Regular grid of cell centres, optionally restricted by an accessibility mask.
/// Cell indices are row-major with the first axis varying fastest.
class GridDomain {
 public:
  GridDomain() = default;
  explicit GridDomain(std::vector<GridAxis> axes, std::vector<bool> accessible = {});

  std::size_t dimension() const { return axes_.size(); }
  const std::vector<GridAxis>& axes() const { return axes_; }
  std::size_t cell_count() const;
  bool has_mask() const { return !mask_.empty(); }

  Location location(std::span<const int> index) const;
  Location location(std::size_t flat) const;
  std::optional<std::vector<int>> index_of(const Location& loc) const;
  std::size_t flat_index(std::span<const int> index) const;
  bool inside(std::span<const int> index) const;
  bool accessible(std::span<const int> index) const;

  std::vector<Location> accessible_cells() const;
  Location centre_cell() const;

 private:
  std::vector<GridAxis> axes_;
  std::vector<bool> mask_;
};

/// An ordered sequence of kappa locations executed atomically.
struct MacroAction {
  std::vector<Location> path;

  std::size_t length() const { return path.size(); }
  const Location& end() const { return path.back(); }
  bool operator==(const MacroAction&) const = default;
  std::partial_ordering operator<=>(const MacroAction&) const = default;
};

/// Directed adjacency over a finite set of node locations. Duplicate edges collapse.
class Graph {
 public:
  std::size_t add_node(const Location& loc);
  void add_edge(const Location& from, const Location& to);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Location>& nodes() const { return nodes_; }
  const std::vector<std::size_t>& neighbours(std::size_t node) const { return adjacency_[node]; }
  std::optional<std::size_t> find(const Location& loc) const;
  std::size_t edge_count() const;

 private:
  std::vector<Location> nodes_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::unordered_map<Location, std::size_t, LocationHash> index_;
};

enum class CatalogRule { cardinal_dives, graph_paths, explicit_list };

/// Available macro-actions per anchor location.
class MacroActionCatalog {
 public:
  explicit MacroActionCatalog(CatalogRule rule = CatalogRule::explicit_list) : rule_(rule) {}

  void set(const Location& anchor, std::vector<MacroAction> actions);
  const std::vector<MacroAction>& at(const Location& anchor) const;
  bool contains(const Location& anchor) const { return by_anchor_.contains(anchor); }

  CatalogRule rule() const { return rule_; }
  /// Largest |A(s)| over all anchors.
  std::size_t max_actions() const { return max_actions_; }
  std::size_t kappa() const { return kappa_; }
  std::size_t anchor_count() const { return by_anchor_.size(); }

 private:
  CatalogRule rule_;
  std::unordered_map<Location, std::vector<MacroAction>, LocationHash> by_anchor_;
  std::size_t max_actions_ = 0;
  std::size_t kappa_ = 0;
};

/// A frozen latent field over a finite set of cells.
class PhenomenonRealization {
 public:
  enum class Provenance { sampled, loaded };

  PhenomenonRealization() = default;
  PhenomenonRealization(std::vector<Location> cells, std::vector<double> values,
                        Provenance provenance, std::uint64_t seed = 0);

  const std::vector<Location>& cells() const { return cells_; }
  const std::vector<double>& values() const { return values_; }
  std::optional<double> value_at(const Location& loc) const;
  double at(const Location& loc) const;  // throws InvalidInput off-field

  double global_max() const { return max_value_; }
  const Location& argmax() const { return cells_[argmax_]; }
  Provenance provenance() const { return provenance_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<Location> cells_;
  std::vector<double> values_;
  std::unordered_map<Location, std::size_t, LocationHash> index_;
  Provenance provenance_ = Provenance::loaded;
  std::uint64_t seed_ = 0;
  double max_value_ = 0.0;
  std::size_t argmax_ = 0;
};

/// Accessible cells above which dense joint sampling is refused. Unmasked grids
/// use a Kronecker-factored path and are not subject to this cap.
inline constexpr std::size_t kDenseSamplingCap = 10000;

/// One joint draw of the latent field (no observation noise) from the GP prior.
PhenomenonRealization sample_phenomenon(const GridDomain& domain, const KernelParams& params,
                                        std::uint64_t seed);

/// Same, over an arbitrary finite set of locations (e.g. graph nodes).
PhenomenonRealization sample_phenomenon(std::span<const Location> cells, const KernelParams& params,
                                        std::uint64_t seed);

/// Straight kappa-step paths along +/- each grid axis that stay inside the accessible domain.
std::vector<MacroAction> cardinal_macro_actions(const Location& start, const GridDomain& domain,
                                                std::size_t kappa);

struct Downsample {
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

/// Simple kappa-step walks leaving `start` (no node repeated, start excluded).
/// With a downsample, `count` walks are chosen without replacement and kept in
/// enumeration order.
std::vector<MacroAction> graph_macro_actions(const Location& start, const Graph& graph, std::size_t kappa,
                                             std::optional<Downsample> downsample = std::nullopt);

MacroActionCatalog cardinal_catalog(const GridDomain& domain, std::size_t kappa);
MacroActionCatalog graph_catalog(const Graph& graph, std::size_t kappa,
                                 std::optional<Downsample> downsample = std::nullopt);

/// Latent values along the path plus i.i.d. N(0, noise_variance) noise.
Eigen::VectorXd execute(const PhenomenonRealization& field, const MacroAction& action, double noise_variance,
                        Rng& rng);

/// CSV `x,y,value` (one coordinate column per dimension when not 2-D: c0,c1,...,value).
PhenomenonRealization load_field(const std::filesystem::path& file);
void save_field(const PhenomenonRealization& field, const std::filesystem::path& file);

/// CSV `from_x,from_y,to_x,to_y`, directed edges.
Graph load_graph(const std::filesystem::path& file);
void save_graph(const Graph& graph, const std::filesystem::path& file);

/// Observations in the field format (`x,y,value`), e.g. for the `plan` subcommand.
ObservationSet load_observations(const std::filesystem::path& file);

}  // namespace macrogpo
