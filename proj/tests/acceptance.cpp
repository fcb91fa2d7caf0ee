// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <sys/wait.h>

#include <chrono>
#include <deque>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "test_support.hpp"
#include "tripletsearch/commands.hpp"

using namespace tripletsearch;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED[" << what << "]";
    }
  }
};

// Every report produced below is rechecked by criterion 4.
struct RecordedEval {
  EvalReport report;
  const Dataset* ds;
  EvalProtocol protocol;
};
std::vector<RecordedEval> g_reports;

void record(const EvalReport& r, const Dataset& ds, EvalProtocol p) { g_reports.push_back({r, &ds, p}); }

constexpr std::uint64_t kSeed = 7;

struct Split {
  DatasetSplit data;
  EvalProtocol protocol;
};

const Split& preset_split(const std::string& name) {
  static std::map<std::string, Split> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    SynthConfig sc = synth_preset(name);
    sc.seed = kSeed;
    auto split = split_by_item(generate_synthetic(sc), 0.5, kSeed);
    const bool cross = split.test.has_domain(Domain::Query) && split.test.has_domain(Domain::Catalog);
    it = cache.emplace(name, Split{std::move(split), cross ? EvalProtocol::CrossDomain
                                                          : EvalProtocol::SinglePool})
             .first;
  }
  return it->second;
}

struct RunSpec {
  std::string preset;
  std::size_t batch_pairs = 48;
  double within_class = 0.0;
  NegativeStrategy negatives = NegativeStrategy::BatchHard;
  PairMode pair_mode = PairMode::AllPairs;

  std::string key() const {
    std::ostringstream s;
    s << preset << " B=" << batch_pairs << " p=" << within_class << " neg=" << to_string(negatives)
      << " pairs=" << to_string(pair_mode);
    return s.str();
  }
};

const TrainResult& run(const RunSpec& spec) {
  static std::map<std::string, TrainResult> cache;
  auto it = cache.find(spec.key());
  if (it != cache.end()) return it->second;
  const Split& split = preset_split(spec.preset);
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.optimizer.lr = 0.05;
  cfg.eval_every = 500;
  cfg.seed = cfg.sampler.seed = kSeed;
  cfg.sampler.batch_pairs = spec.batch_pairs;
  cfg.sampler.within_class_fraction = spec.within_class;
  cfg.sampler.negatives = spec.negatives;
  cfg.pair_mode = spec.pair_mode;
  cfg.eval_protocol = split.protocol;
  auto result = train(split.data.train, cfg, &split.data.test);
  for (const auto& e : result.evals) record(e.report, split.data.test, split.protocol);
  std::cerr << "  trained " << spec.key() << ": recall@1 " << result.evals.front().report.recall(1)
            << " -> " << result.evals.back().report.recall(1) << "\n";
  return cache.emplace(spec.key(), std::move(result)).first->second;
}

double final_r1(const RunSpec& spec) { return run(spec).evals.back().report.recall(1); }

double window_nz(const RunSpec& spec) {
  const auto& r = run(spec);
  const auto [first, last] = nonzero_fraction_window(r.steps.size());
  return mean_nonzero_fraction(r.steps, first, last);
}

// 1
void gradient_check(Outcome& o) {
  std::mt19937_64 rng(1001);
  for (auto arch : {Architecture::Linear, Architecture::MLP1}) {
    int checked = 0;
    double worst = 0.0;
    while (checked < 50) {
      auto inst = random_gradient_instance(arch, rng);
      if (!tie_free(inst, 1e-4)) continue;
      const auto analytic = flatten(batch_gradients(inst.model, inst.batch, inst.cfg, inst.ds));
      const auto fd = fd_gradient(inst.model, [&](const EmbeddingModel& m) {
        return batch_loss(m, inst.batch, inst.cfg, inst.ds).mean_loss;
      });
      worst = std::max(worst, relative_error(analytic, fd));
      ++checked;
    }
    o.detail << to_string(arch) << " max rel err " << worst << "; ";
    o.require(worst < 1e-5, to_string(arch) + " gradient");
  }
}

// 2
void batch_hard_oracle(Outcome& o) {
  std::mt19937_64 rng(1002);
  std::size_t mismatches = 0, ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = 2 + rng() % 15;
    const std::size_t dim = 2 + rng() % 4;
    const bool from_anchors = trial % 2;
    std::vector<Vector> a(b), p(b);
    std::vector<std::size_t> items(b);
    // Small-integer coordinates make exact similarity ties common.
    const bool coarse = trial % 3 == 0;
    std::uniform_int_distribution<int> small(-1, 1);
    for (std::size_t i = 0; i < b; ++i) {
      items[i] = rng() % (b / 2 + 1);
      for (auto* v : {&a[i], &p[i]}) {
        do {
          *v = coarse ? Vector(dim) : random_vector(dim, rng);
          if (coarse)
            for (auto& x : *v) x = small(rng);
        } while (l2_norm(*v) == 0);
      }
    }
    const auto got = batch_hard_select(a, p, items, from_anchors);
    const auto want = brute_force_batch_hard(a, p, items, from_anchors);
    bool same = got.dropped == want.dropped && got.triplets.size() == want.triplets.size();
    for (std::size_t t = 0; same && t < got.triplets.size(); ++t) {
      const auto &x = got.triplets[t], &y = want.triplets[t];
      same = x.pair == y.pair && x.negative == y.negative && x.s_an == y.s_an && x.s_ap == y.s_ap;
    }
    if (!same) ++mismatches;
    if (coarse) ++ties;
  }
  o.detail << "1000 batches (" << ties << " with integer coordinates), " << mismatches
           << " mismatches";
  o.require(mismatches == 0, "oracle mismatch");
}

// 3
void retrieval_oracle(Outcome& o) {
  std::mt19937_64 rng(1003);
  std::size_t mismatches = 0;
  std::uniform_int_distribution<int> small(-2, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const std::size_t dim = 2 + rng() % 4;
    const bool coarse = trial % 2;
    std::vector<FeatureRecord> recs;
    std::vector<Vector> rows;
    for (std::size_t i = 0; i < n; ++i) {
      Vector f;
      do {
        f = coarse ? Vector(dim) : random_vector(dim, rng);
        if (coarse)
          for (auto& x : f) x = small(rng);
      } while (l2_norm(f) == 0);
      rows.push_back(f);
      recs.push_back({"r" + std::to_string(i), "i" + std::to_string(i), "c", Domain::None, f});
    }
    const Dataset ds(recs, dim);
    const auto index = build_index(EmbeddingModel::identity(dim), ds, EvalProtocol::SinglePool);
    std::vector<std::size_t> refs(n);
    std::iota(refs.begin(), refs.end(), 0);
    const std::size_t k = 1 + rng() % (n + 5);
    Vector q = rows[rng() % n];
    if (!coarse) q = random_vector(dim, rng);
    const std::optional<std::size_t> excl =
        trial % 4 < 2 ? std::optional<std::size_t>(rng() % n) : std::nullopt;
    if (retrieve_topk(index, q, k, excl) != brute_force_topk(rows, refs, q, k, excl)) ++mismatches;
  }
  o.detail << "1000 instances, " << mismatches << " mismatches";
  o.require(mismatches == 0, "oracle mismatch");
}

// 4
void metric_properties(Outcome& o) {
  std::mt19937_64 rng(1004);
  for (int trial = 0; trial < 30; ++trial) {
    static std::deque<Dataset> keep;
    const bool cross = trial % 2;
    keep.push_back(random_dataset(2 + trial % 4, 4, cross ? 2 : 3, 5, rng, cross));
    const Dataset& ds = keep.back();
    const auto protocol = cross ? EvalProtocol::CrossDomain : EvalProtocol::SinglePool;
    const std::size_t catalog = catalog_records(ds, protocol).size();
    const std::vector<std::size_t> ks{1, 2, 5, catalog};
    const auto model = random_model(trial % 3 ? Architecture::MLP1 : Architecture::Linear, 5, 6, 4, rng);
    const auto r = evaluate(model, ds, protocol, ks);
    record(r, ds, protocol);
    o.require(r.excluded_queries == 0, "random dataset has unmatched queries");
    o.require(r.recall(catalog) == 1.0, "recall@|catalog| != 1");
  }
  std::size_t bad_order = 0, bad_rows = 0;
  for (const auto& e : g_reports) {
    for (std::size_t i = 1; i < e.report.recall_at_k.size(); ++i)
      if (e.report.recall_at_k[i].second < e.report.recall_at_k[i - 1].second) ++bad_order;
    // per-class counts of queries that have a same-item record in the catalog
    std::vector<std::size_t> per_class(e.ds->class_count(), 0);
    const auto catalog = catalog_records(*e.ds, e.protocol);
    for (std::size_t q : query_records(*e.ds, e.protocol)) {
      const bool matched = std::any_of(catalog.begin(), catalog.end(), [&](std::size_t r) {
        return r != q && e.ds->item_of(r) == e.ds->item_of(q);
      });
      if (matched) ++per_class[e.ds->class_of(q)];
    }
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      std::size_t row = 0;
      for (auto v : e.report.confusion[c]) row += v;
      if (row != per_class[c]) ++bad_rows;
    }
  }
  o.detail << g_reports.size() << " evaluations checked";
  o.require(bad_order == 0, "recall not monotone in k");
  o.require(bad_rows == 0, "confusion row sums");
}

// 5
void batch_hard_vs_baselines(Outcome& o) {
  const Split& split = preset_split("df-like");
  const auto identity =
      evaluate(EmbeddingModel::identity(split.data.test.input_dim()), split.data.test, split.protocol);
  record(identity, split.data.test, split.protocol);
  const double hard = final_r1({"df-like"});
  const double random = final_r1({"df-like", 48, 0.0, NegativeStrategy::UniformRandom});
  o.detail << "recall@1 batch-hard " << hard << ", identity " << identity.recall(1)
           << ", random negatives " << random;
  o.require(hard >= identity.recall(1) + 0.10, "vs identity");
  o.require(hard >= random + 0.10, "vs random negatives");
}

// 6
void within_class_yield(Outcome& o) {
  const double sop0 = window_nz({"sop-like", 48, 0.0});
  const double sop8 = window_nz({"sop-like", 48, 0.8});
  const double df0 = window_nz({"df-like", 48, 0.0});
  const double df8 = window_nz({"df-like", 48, 0.8});
  o.detail << "mean nonzero fraction sop-like " << sop0 << " -> " << sop8 << ", df-like " << df0
           << " -> " << df8;
  o.require(sop8 - sop0 >= 0.05, "sop-like gap");
  o.require(sop8 - sop0 > df8 - df0, "sop-like gap exceeds df-like gap");
}

// 7
void batch_size_saturation(Outcome& o) {
  const double b4 = final_r1({"sop-like", 4});
  const double b48 = final_r1({"sop-like", 48});
  const double b96 = final_r1({"sop-like", 96});
  o.detail << "recall@1 B=4 " << b4 << ", B=48 " << b48 << ", B=96 " << b96;
  o.require(b4 < b48, "B=4 below B=48");
  o.require(std::abs(b48 - b96) <= 0.03, "B=48 vs B=96");
}

// 8
void pair_mode_ablation(Outcome& o) {
  const double all = final_r1({"df-like"});
  const double cross =
      final_r1({"df-like", 48, 0.0, NegativeStrategy::BatchHard, PairMode::CrossDomainOnly});
  o.detail << "recall@1 all pairs " << all << ", cross-domain only " << cross
           << (all > cross ? " (all pairs better)" : " (all pairs not better; soft expectation unmet)");
  o.require(all >= cross - 0.02, "non-inferiority");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 9
void cli_determinism(Outcome& o) {
  const auto root = scratch_dir("acceptance_determinism");
  const std::string args =
      " train --preset df-like --synth-seed 7 --holdout 0.5 --split-seed 7 --steps 300"
      " --eval-every 100 --within-class-frac 0.5 --arch mlp1 --hidden-dim 32 --lr 0.05 --seed 7";
  for (const char* name : {"a", "b"}) {
    const std::string cmd =
        std::string(TSEARCH_BIN) + args + " -o " + (root / name).string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    o.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, std::string("run ") + name);
  }
  for (const char* f : {"metrics.jsonl", "checkpoint.json"}) {
    const auto a = slurp(root / "a" / f), b = slurp(root / "b" / f);
    o.require(!a.empty() && a == b, std::string(f) + " differs");
    o.detail << f << " " << a.size() << " bytes; ";
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Outcome&)> fn;
  };
  // Criterion 4 runs last so it can recheck every evaluation produced by the others.
  const std::vector<Criterion> criteria = {
      {1, "gradient finite-difference check", 60, gradient_check},
      {2, "batch-hard oracle equivalence", 60, batch_hard_oracle},
      {3, "retrieval oracle equivalence", 60, retrieval_oracle},
      {5, "batch-hard beats identity and random negatives", 300, batch_hard_vs_baselines},
      {6, "within-class sampling raises nonzero fraction", 600, within_class_yield},
      {7, "batch-size saturation", 900, batch_size_saturation},
      {8, "all-pairs vs cross-domain-only", 900, pair_mode_ablation},
      {9, "train determinism", 300, cli_determinism},
      {4, "metric properties", 60, metric_properties},
  };
  std::map<int, std::string> lines;
  bool all = true;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < c.budget_s, "runtime budget");
    all = all && o.pass;
    char head[128];
    std::snprintf(head, sizeof head, "%s criterion %d (%s) [%.1fs]: ", o.pass ? "PASS" : "FAIL",
                  c.id, c.name, secs);
    lines[c.id] = head + o.detail.str();
    std::cerr << lines[c.id] << "\n";
  }
  std::cout << "\n";
  for (const auto& [id, line] : lines) std::cout << line << "\n";
  std::cout << (all ? "all criteria passed" : "some criteria FAILED") << "\n";
  return all ? 0 : 1;
}
