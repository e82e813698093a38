#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "wmguide/config.hpp"
#include "wmguide/errors.hpp"
#include "wmguide/harness.hpp"

namespace {

using namespace wmguide;
using namespace wmguide::harness;

struct Overrides {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
};

ExperimentConfig resolve(const Overrides& o) {
  ConfigMap map = o.config_file.empty() ? ConfigMap{} : ConfigMap::load(o.config_file);
  for (const auto& [k, v] : o.flags) map.set(k, v);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + s + "'");
    map.set(s.substr(0, eq), s.substr(eq + 1));
  }
  auto cfg = ExperimentConfig::from_map(map);
  cfg.validate();
  return cfg;
}

void print_report(const stats::DetectionReport& r) {
  std::printf("%-18s %-16s n=%zu  median p=%.3g  P_D@1e-6=%.3f  -log10 P_FA@0.9=%.2f", r.method.c_str(),
              r.attack.c_str(), r.samples, r.median_pvalue,
              r.pd_at_fa.size() > 2 ? r.pd_at_fa[2] : 0.0,
              r.neglog10_pfa_at_pd.size() > 1 ? r.neglog10_pfa_at_pd[1] : 0.0);
  if (r.message_length) std::printf("  BER=%.4f  capacity=%d", r.ber_median, r.capacity);
  std::printf("\n");
}

int run(const std::function<void(const ExperimentConfig&)>& body, const Overrides& o) {
  try {
    body(resolve(o));
    return 0;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateInput& e) {
    std::cerr << "degenerate input: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const NotFound& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermark guidance toolkit for a toy latent diffusion model"};
  app.require_subcommand(1);
  Overrides o;

  const auto flag = [&](CLI::App* a, const std::string& name, const std::string& key,
                        const std::string& help) {
    a->add_option_function<std::string>(
        name, [&o, key](const std::string& v) { o.flags[key] = v; }, help);
  };
  const auto add_common = [&](CLI::App* a) {
    a->add_option("--config", o.config_file, "Configuration file (key = value, [sections])");
    a->add_option("--set", o.sets, "Override any config key, key=value (repeatable)");
    flag(a, "--seed", "seed", "Master seed");
    flag(a, "--out", "out", "Output directory");
    flag(a, "--trials", "trials", "Number of trials");
    flag(a, "--preset", "preset", "Extractor preset: short (48 bits) or long (256 bits)");
    flag(a, "--omega", "guidance.omega", "Guidance strength");
    flag(a, "--tau", "guidance.tau", "Fraction of extreme gradient entries clipped");
    flag(a, "--eta", "guidance.eta", "Gradient norm threshold");
    flag(a, "--start-step", "guidance.start_step", "Guide steps t <= this (0 disables)");
    flag(a, "--transforms", "guidance.transforms", "Transform set used during guidance");
    flag(a, "--gradient-mode", "guidance.gradient_mode", "fast-identity or full-unroll");
    flag(a, "--aggregator", "guidance.aggregator", "pcgrad or mean");
    flag(a, "--norm-control", "guidance.norm_control", "max-eta or rescale");
    flag(a, "--attacks", "attacks", "Attacks applied before detection");
  };

  std::map<std::string, std::function<void(const ExperimentConfig&)>> verbs{
      {"calibrate",
       [](const ExperimentConfig& c) {
         const auto r = cmd_calibrate(c);
         std::printf("whitening written to %s (n=%zu)\n", r.whitening_file.string().c_str(), r.samples);
         std::printf("held-out max |corr|: raw %.4f, whitened %.4f; max |var-1| %.4f\n",
                     r.raw_max_correlation, r.whitened_max_correlation,
                     r.whitened_max_variance_error);
       }},
      {"embed",
       [](const ExperimentConfig& c) {
         const auto r = cmd_embed(c);
         std::printf("%zu trials written to %s; median final loss %.4f\n", r.trials.size(),
                     (c.out / "embed").string().c_str(), r.median_final_loss);
       }},
      {"attack-detect",
       [](const ExperimentConfig& c) {
         for (const auto& r : cmd_attack_detect(c).reports) print_report(r);
       }},
      {"posthoc",
       [](const ExperimentConfig& c) {
         for (const auto& r : cmd_posthoc(c).reports) print_report(r);
       }},
      {"baseline-seed",
       [](const ExperimentConfig& c) {
         for (const auto& r : cmd_baseline_seed(c).reports) print_report(r);
       }},
      {"validate-fa",
       [](const ExperimentConfig& c) {
         const auto r = cmd_validate_fa(c);
         for (const auto& cv : r.curves) {
           std::printf("%-9s %-11s within band: %s\n", cv.variant.c_str(), cv.key.c_str(),
                       cv.curve.all_within_band() ? "yes" : "no");
         }
       }},
      {"spectrum",
       [](const ExperimentConfig& c) {
         const auto r = cmd_spectrum(c);
         std::printf("spectrum difference (%zux%zu) written to %s\n", r.diff.side, r.diff.side,
                     (c.out / "spectrum").string().c_str());
       }},
      {"ablate-steps",
       [](const ExperimentConfig& c) {
         for (const auto& r : cmd_ablate_steps(c).summary()) {
           std::printf("T_w=%-3d -log10 P_FA@0.9=%.2f capacity=%d guided steps=%zu grads=%zu\n",
                       r.guided_steps_setting, r.neglog10_pfa_at_pd90, r.capacity, r.guided_steps,
                       r.gradient_evaluations);
         }
       }},
      {"tune-omega",
       [](const ExperimentConfig& c) {
         const auto r = cmd_tune_omega(c);
         for (const auto& g : r.grid) {
           std::printf("omega=%-5g eta=%-4g median cos=%.4f deviation=%.4f%s\n", g.omega, g.eta,
                       g.median_cosine, g.median_deviation, g.feasible ? "" : "  (over budget)");
         }
         if (r.best) std::printf("best: omega=%g eta=%g\n", r.best->omega, r.best->eta);
         else std::printf("no setting within the deviation budget\n");
       }},
      {"show-config", [](const ExperimentConfig& c) { std::cout << c.to_text(); }},
  };
  const std::map<std::string, std::string> help{
      {"calibrate", "Fit the whitening transform on synthetic textures"},
      {"embed", "Generate watermarked images with guided sampling"},
      {"attack-detect", "Attack embedded images and report detection metrics"},
      {"posthoc", "Post-hoc PGD comparator through the same attack pipeline"},
      {"baseline-seed", "Seed-space baselines (tree-ring, Gaussian shading)"},
      {"validate-fa", "Empirical false-alarm curves, raw and whitened"},
      {"spectrum", "Log-spectrum difference between guided and clean images"},
      {"ablate-steps", "Detection metrics against the number of guided steps"},
      {"tune-omega", "Grid search for guidance strength under a latent deviation budget"},
      {"show-config", "Print the resolved configuration"},
  };
  std::string chosen;
  for (const auto& [name, fn] : verbs) {
    auto* sub = app.add_subcommand(name, help.at(name));
    add_common(sub);
    sub->callback([&chosen, name = name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  return run(verbs.at(chosen), o);
}
