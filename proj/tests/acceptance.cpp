// Acceptance gate: one line per shipped verification criterion.  Each
// criterion maps to a suite from the verification layer, run at its pinned
// parameters, with wall-clock budgets enforced where the contract sets one.
// The final criterion reruns every suite at a different thread count and
// requires byte-identical CSV artifacts.

#include <cstdio>
#include <map>
#include <poctrl/verify.hpp>
#include <string>
#include <vector>

using namespace poctrl;

namespace {

int failures = 0;

std::string failing_checks(const SuiteReport& rep) {
  std::string out;
  for (const CheckResult& c : rep.checks)
    if (!c.pass) out += (out.empty() ? "" : ", ") + c.name;
  return out;
}

void line(int idx, const char* label, const SuiteReport& rep, double budget) {
  const bool in_budget = budget <= 0.0 || rep.elapsed_s < budget;
  const bool ok = rep.pass() && in_budget;
  if (!ok) ++failures;
  std::printf("[%s] criterion %d: %s (%.2fs", ok ? "PASS" : "FAIL", idx, label, rep.elapsed_s);
  if (budget > 0.0) std::printf(" / budget %.0fs", budget);
  std::printf(")");
  if (!rep.pass()) std::printf(" -- failing: %s", failing_checks(rep).c_str());
  if (!in_budget) std::printf(" -- over budget");
  std::printf("\n");
  std::fflush(stdout);
}

// Byte comparison of two artifact sets, by artifact name.
bool artifacts_match(const SuiteReport& a, const SuiteReport& b, std::string* why) {
  std::map<std::string, const std::string*> left;
  for (const Artifact& art : a.artifacts) left[art.name] = &art.csv;
  if (a.artifacts.size() != b.artifacts.size()) {
    *why = a.suite + ": artifact count differs";
    return false;
  }
  for (const Artifact& art : b.artifacts) {
    auto it = left.find(art.name);
    if (it == left.end()) {
      *why = a.suite + ": " + art.name + " missing from baseline";
      return false;
    }
    if (*it->second != art.csv) {
      *why = a.suite + ": " + art.name + " bytes differ";
      return false;
    }
  }
  return true;
}

}  // namespace

int main() {
  std::printf("acceptance: running verification suites\n");
  std::fflush(stdout);

  LqgSuiteParams lqg_p;
  HjbSuiteParams hjb_p;
  KalmanSuiteParams kalman_p;
  FlowSuiteParams flow_p;
  ZakaiSuiteParams zakai_p;
  GapSuiteParams gap_p;
  MartingaleSuiteParams mart_p;
  GirsanovSuiteParams gir_p;

  const SuiteReport lqg = verify_lqg(lqg_p);
  line(1, "closed-form solver against an independent Gaussian-case integrator", lqg, 5.0);
  const SuiteReport hjb = verify_hjb(hjb_p);
  line(2, "pointwise Bellman residual with tamper sensitivity", hjb, 10.0);
  const SuiteReport kalman = verify_kalman(kalman_p);
  line(3, "particle filter against the exact Gaussian recursion", kalman, 60.0);
  const SuiteReport flow = verify_flow(flow_p);
  line(4, "restart-and-propagate flow identity", flow, 5.0);
  const SuiteReport zakai = verify_zakai(zakai_p);
  line(5, "weak-form filter residual contraction under grid refinement", zakai, 30.0);
  const SuiteReport gap = verify_gap(gap_p);
  line(6, "policy cost gaps bracket the solver value", gap, 300.0);
  const SuiteReport mart = verify_martingale(mart_p);
  line(7, "value-process drift under optimal and mismatched policies", mart, 0.0);
  const SuiteReport gir = verify_girsanov(gir_p);
  line(8, "jump-intensity change of measure consistency", gir, 0.0);

  // Same studies at a different thread count: results must not move a byte.
  const int alt = 4;
  lqg_p.threads = alt;
  hjb_p.threads = alt;
  kalman_p.threads = alt;
  flow_p.threads = alt;
  zakai_p.threads = alt;
  gap_p.mc.threads = alt;
  mart_p.threads = alt;
  mart_p.envelope_mc.threads = alt;
  gir_p.mc.threads = alt;

  const std::vector<std::pair<const SuiteReport*, SuiteReport>> reruns = {
      {&lqg, verify_lqg(lqg_p)},        {&hjb, verify_hjb(hjb_p)},
      {&kalman, verify_kalman(kalman_p)}, {&flow, verify_flow(flow_p)},
      {&zakai, verify_zakai(zakai_p)},  {&gap, verify_gap(gap_p)},
      {&mart, verify_martingale(mart_p)}, {&gir, verify_girsanov(gir_p)}};

  SuiteReport det;
  det.suite = "determinism";
  double rerun_elapsed = 0.0;
  bool all_match = true;
  std::string why;
  for (const auto& [base, rerun] : reruns) {
    rerun_elapsed += rerun.elapsed_s;
    std::string reason;
    const bool match = artifacts_match(*base, rerun, &reason);
    if (!match && all_match) {
      all_match = false;
      why = reason;
    }
    det.checks.push_back({base->suite + "_bytes_stable", match, match ? 1.0 : 0.0, 1.0,
                          match ? "byte-identical at " + std::to_string(alt) + " threads" : reason});
  }
  det.elapsed_s = rerun_elapsed;
  line(9, "byte-identical artifacts across thread counts", det, 0.0);

  std::printf("acceptance: %d/9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
