// Command-line front end. Exit codes: 0 success, 1 error, 2 unsat,
// 3 inconclusive.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sensprobe/sensprobe.hpp"

namespace fs = std::filesystem;
using namespace sensprobe;

namespace {

/// "8x6x4x1" -> {8, 6, 4, 1}.
std::vector<std::size_t> parse_architecture(const std::string& s) {
  std::vector<std::size_t> widths;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, 'x')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != part.size() || part.empty() || v == 0) throw InvalidInput("bad architecture '" + s + "'");
    widths.push_back(v);
  }
  if (widths.empty()) throw InvalidInput("bad architecture '" + s + "'");
  return widths;
}

std::vector<std::optional<double>> parse_schedule(const std::string& s) {
  std::vector<std::optional<double>> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part == "none") {
      out.emplace_back();
      continue;
    }
    try {
      std::size_t pos = 0;
      out.emplace_back(std::stod(part, &pos));
      if (pos != part.size()) throw InvalidInput("");
    } catch (const std::exception&) {
      throw InvalidInput("bad schedule entry '" + part + "' (seconds or 'none')");
    }
  }
  return out;
}

std::pair<double, double> parse_range(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw InvalidInput("");
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw InvalidInput("bad range '" + s + "', expected lo,hi");
  }
}

std::string sidecar_path(const std::string& model_path) {
  fs::path p(model_path);
  return (p.parent_path() / (p.stem().string() + ".delta.json")).string();
}

/// Flags shared by subcommands that build a RunConfig.
struct ConfigFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model, data, out;
  std::optional<std::string> arch, schedule, delta_mode, mode, solver;
  std::optional<double> theta, epsilon_z, radius, epsilon_margin;
  std::optional<std::size_t> base_index, epochs;
  std::optional<int> target, required_label;

  RunConfig build() const {
    RunConfig c = config_file.empty() ? RunConfig{} : load_config(config_file);
    if (seed) c.seed = *seed;
    if (model) c.model_path = *model;
    if (data) c.dataset_path = *data;
    if (out) c.out_dir = *out;
    if (arch) c.train.architecture = parse_architecture(*arch);
    if (epochs) c.train.epochs = *epochs;
    if (schedule) c.schedule = parse_schedule(*schedule);
    if (delta_mode) c.query.delta_mode = parse_delta_mode(*delta_mode);
    if (mode) c.mode = parse_search_mode(*mode);
    if (solver) c.solver.command = *solver;
    if (theta) c.query.theta = *theta;
    if (epsilon_z) c.epsilon_z = *epsilon_z;
    if (epsilon_margin) c.epsilon_margin = *epsilon_margin;
    if (radius) c.query.gamma_radius = *radius;
    if (base_index) c.base_index = *base_index;
    if (target) c.query.target = *target;
    if (required_label) c.query.required_label = *required_label;
    c.validate();
    return c;
  }
};

void add_config_flag(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "master seed");
}

void add_data_flags(CLI::App* app, ConfigFlags& f, bool model_required) {
  auto* m = app->add_option("--model", f.model, "model JSON file");
  if (model_required) m->required();
  app->add_option("--data", f.data, "dataset CSV (synthetic data from the config when omitted)");
}

void add_query_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--theta", f.theta, "detection threshold");
  app->add_option("--epsilon-z", f.epsilon_z, "logit threshold (derived from the base logit when omitted)");
  app->add_option("--epsilon-margin", f.epsilon_margin, "derived epsilon_Z targets margin * theta");
  app->add_option("--radius", f.radius, "bound on each transform variable");
  app->add_option("--base-index", f.base_index, "dataset row used as the base sample");
  app->add_option("--target", f.target, "label the attack pushes towards")->check(CLI::Range(0, 1));
  app->add_option("--required-label", f.required_label, "label the sample must keep")->check(CLI::Range(0, 1));
  app->add_option("--delta-mode", f.delta_mode, "existential or pessimistic");
  app->add_option("--schedule", f.schedule, "per-iteration timeouts, e.g. 5,20 ('none' for no limit)");
  app->add_option("--solver", f.solver, "solver executable");
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

nlohmann::json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}};
}

std::vector<double> read_sample(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  try {
    if (j.is_array()) return j.get<std::vector<double>>();
    return j.at("result").at("sample").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInput(path + ": expected a JSON array or an outcome.json with a found sample");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitive-sample search for detecting tampered ReLU networks"};
  app.require_subcommand(1);
  int status = 0;

  // config --dump
  ConfigFlags cfg_flags;
  bool dump = false;
  auto* config_cmd = app.add_subcommand("config", "Show the effective configuration");
  add_config_flag(config_cmd, cfg_flags);
  config_cmd->add_flag("--dump", dump, "print every setting with its value")->required();
  config_cmd->callback([&] { print_json(config_to_json(cfg_flags.build())); });

  // train
  ConfigFlags train_flags;
  std::string train_out;
  std::optional<std::string> save_data;
  auto* train_cmd = app.add_subcommand("train", "Train a network");
  add_config_flag(train_cmd, train_flags);
  train_cmd->add_option("--data", train_flags.data, "dataset CSV (synthetic data when omitted)");
  train_cmd->add_option("--arch", train_flags.arch, "layer widths after the input, e.g. 8x6x4x1");
  train_cmd->add_option("--epochs", train_flags.epochs, "training epochs");
  train_cmd->add_option("--out", train_out, "model JSON to write")->required();
  train_cmd->add_option("--save-data", save_data, "also write the dataset used as CSV");
  train_cmd->callback([&] {
    const RunConfig c = train_flags.build();
    const Dataset d = obtain_dataset(c);
    const Mlp m = train(c.train_config(), d);
    save_model(m, train_out);
    if (save_data) save_csv(d, *save_data);
    print_json({{"model", train_out}, {"network", m.dims_string()}, {"metrics", metrics_json(evaluate(m, d))}});
  });

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Produce a tampered model");
  attack_cmd->require_subcommand(1);

  ConfigFlags trojan_flags;
  std::string trojan_out;
  std::optional<double> poison;
  std::optional<std::size_t> retrain_epochs;
  auto* trojan_cmd = attack_cmd->add_subcommand("trojan-retrain", "Retrain on trigger-stamped samples");
  add_config_flag(trojan_cmd, trojan_flags);
  add_data_flags(trojan_cmd, trojan_flags, true);
  trojan_cmd->add_option("--out", trojan_out, "tampered model JSON")->required();
  trojan_cmd->add_option("--poison-fraction", poison, "share of samples stamped and relabelled");
  trojan_cmd->add_option("--epochs", retrain_epochs, "retraining epochs");
  trojan_cmd->callback([&] {
    RunConfig c = trojan_flags.build();
    if (poison) c.poison_fraction = *poison;
    if (retrain_epochs) c.retrain.epochs = *retrain_epochs;
    c.validate();
    const Dataset d = obtain_dataset(c);
    const Mlp m = obtain_model(c, d);
    const Trigger trig = c.trigger.build(d.dim);
    const Mlp t = trojan_retrain(m, d, trig, c.retrain_config(), c.poison_fraction);
    save_model(t, trojan_out);
    write_text_file(sidecar_path(trojan_out), to_json(output_delta(m, t)).dump(2) + "\n");
    const Dataset victims = d.filter_label(1 - trig.target);
    print_json({{"model", trojan_out},
                {"clean_metrics", metrics_json(evaluate(t, d))},
                {"attack_success_rate", victims.empty() ? 0.0 : attack_success_rate(t, victims, trig)}});
  });

  ConfigFlags perturb_flags;
  std::string perturb_out;
  std::optional<double> inflate_fraction;
  std::optional<std::string> inflate_range, deflate_range;
  auto* perturb_cmd = attack_cmd->add_subcommand("perturb", "Inflate/deflate the output-layer weights");
  add_config_flag(perturb_cmd, perturb_flags);
  perturb_cmd->add_option("--model", perturb_flags.model, "model JSON file")->required();
  perturb_cmd->add_option("--out", perturb_out, "tampered model JSON")->required();
  perturb_cmd->add_option("--inflate-fraction", inflate_fraction, "share of output weights inflated");
  perturb_cmd->add_option("--inflate-range", inflate_range, "lo,hi");
  perturb_cmd->add_option("--deflate-range", deflate_range, "lo,hi");
  perturb_cmd->callback([&] {
    RunConfig c = perturb_flags.build();
    if (inflate_fraction) c.perturb.inflate_fraction = *inflate_fraction;
    if (inflate_range) c.perturb.inflate_range = parse_range(*inflate_range);
    if (deflate_range) c.perturb.deflate_range = parse_range(*deflate_range);
    c.validate();
    const Mlp m = load_model(*c.model_path);
    m.validate();
    auto [p, rep] = synthetic_perturb(m, c.perturb_spec());
    save_model(p, perturb_out);
    write_text_file(sidecar_path(perturb_out), to_json(rep).dump(2) + "\n");
    print_json({{"model", perturb_out}, {"delta_report", to_json(rep)}});
  });

  // profile
  ConfigFlags profile_flags;
  std::optional<std::string> profile_out;
  auto* profile_cmd = app.add_subcommand("profile", "Decision profile of the hidden ReLU nodes");
  add_config_flag(profile_cmd, profile_flags);
  add_data_flags(profile_cmd, profile_flags, true);
  profile_cmd->add_option("--out", profile_out, "write the profile JSON here as well");
  profile_cmd->callback([&] {
    const RunConfig c = profile_flags.build();
    const Dataset d = obtain_dataset(c);
    const Mlp m = obtain_model(c, d);
    const DBiasProfile p = compute_dbias(m, d);
    nlohmann::json j = to_json(p);
    nlohmann::json order = nlohmann::json::array();
    for (NodeId id : fix_order(p)) order.push_back("n_" + std::to_string(id.layer + 1) + "_" + std::to_string(id.neuron));
    j["fix_order"] = order;
    if (profile_out) write_text_file(*profile_out, j.dump(2) + "\n");
    print_json(j);
  });

  // find-sample
  ConfigFlags find_flags;
  std::string run_dir = "run";
  auto* find_cmd = app.add_subcommand("find-sample", "Search for a sensitive sample");
  add_config_flag(find_cmd, find_flags);
  add_data_flags(find_cmd, find_flags, true);
  add_query_flags(find_cmd, find_flags);
  find_cmd->add_option("--mode", find_flags.mode, "greedy or naive");
  find_cmd->add_option("--run-dir", run_dir, "directory for scripts, status.log and outcome.json");
  find_cmd->callback([&] {
    const RunConfig c = find_flags.build();
    const Dataset d = obtain_dataset(c);
    const Mlp m = obtain_model(c, d);
    const auto attempts = find_sample(c, m, d, fs::path(run_dir));
    const RunOutcome o = make_outcome(c, m, attempts.back());
    const nlohmann::json j = to_json(o);
    write_text_file(fs::path(run_dir) / "outcome.json", j.dump(2) + "\n");
    std::cout << "status: " << to_string(o.search.kind);
    if (o.search.kind == OutcomeKind::Found)
      std::cout << " (iteration " << o.search.iteration << ", base row " << attempts.back().base_index << ")";
    if (!o.search.reason.empty()) std::cout << " - " << o.search.reason;
    std::cout << "\noutcome: " << (fs::path(run_dir) / "outcome.json").string() << '\n';
    status = exit_code(o.search.kind);
  });

  // verify
  std::string verify_model, verify_suspect, verify_name = "suspect";
  std::optional<std::string> verify_sample_file, verify_run;
  double verify_theta = 0.01;
  auto* verify_cmd = app.add_subcommand("verify", "Compare two models on a sensitive sample");
  verify_cmd->add_option("--model", verify_model, "original model JSON")->required();
  verify_cmd->add_option("--suspect", verify_suspect, "deployed model JSON")->required();
  auto* sample_opt = verify_cmd->add_option("--sample", verify_sample_file, "JSON array, or an outcome.json");
  auto* run_opt = verify_cmd->add_option("--run-dir", verify_run, "take the sample from DIR/outcome.json and record the verdict there");
  sample_opt->excludes(run_opt);
  verify_cmd->add_option("--theta", verify_theta, "detection threshold")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--name", verify_name, "label of the verdict in outcome.json");
  verify_cmd->callback([&] {
    if (!verify_sample_file && !verify_run) throw InvalidInput("verify needs --sample or --run-dir");
    const fs::path outcome_path = verify_run ? fs::path(*verify_run) / "outcome.json" : fs::path();
    const std::vector<double> s = read_sample(verify_run ? outcome_path.string() : *verify_sample_file);
    const Mlp m = load_model(verify_model), sus = load_model(verify_suspect);
    m.validate();
    sus.validate();
    const Verdict v = verify_sample(m, sus, s, verify_theta);
    if (verify_run) {
      nlohmann::json j = read_json_file(outcome_path);
      j["verdicts"][verify_name] = {{"model", verify_suspect}, {"beta", v.beta}, {"flagged", v.flagged}};
      write_text_file(outcome_path, j.dump(2) + "\n");
    }
    print_json({{"beta", v.beta}, {"flagged", v.flagged}, {"theta", verify_theta}});
  });

  // report
  std::vector<std::string> report_runs;
  std::optional<std::string> report_out;
  auto* report_cmd = app.add_subcommand("report", "Write report.json and report.md for run directories");
  report_cmd->add_option("runs", report_runs, "run directories")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_out, "output directory (the run directory when there is one)");
  report_cmd->callback([&] {
    std::vector<ReportRow> rows;
    for (const auto& r : report_runs) rows.push_back(report_row(run_name(r), read_json_file(fs::path(r) / "outcome.json")));
    if (!report_out && rows.size() > 1) throw InvalidInput("report over several runs needs --out");
    const fs::path out = report_out ? fs::path(*report_out) : fs::path(report_runs.front());
    write_report(rows, out);
    std::cout << report_markdown(rows);
  });

  // end2end
  ConfigFlags e2e_flags;
  auto* e2e_cmd = app.add_subcommand("end2end", "Train, attack, search and verify in one run");
  add_config_flag(e2e_cmd, e2e_flags);
  add_data_flags(e2e_cmd, e2e_flags, false);
  add_query_flags(e2e_cmd, e2e_flags);
  e2e_cmd->add_option("--mode", e2e_flags.mode, "greedy or naive");
  e2e_cmd->add_option("--out", e2e_flags.out, "run directory");
  e2e_cmd->callback([&] {
    const RunConfig c = e2e_flags.build();
    const EndToEndResult r = run_end2end(c, fs::path(c.out_dir));
    std::cout << "training accuracy " << r.clean.accuracy << ", trojan clean accuracy " << r.trojan_clean.accuracy
              << ", attack success " << r.trojan_asr << '\n';
    std::cout << report_markdown({report_row(run_name(c.out_dir), read_json_file(fs::path(c.out_dir) / "outcome.json"))});
    status = exit_code(r.outcome.search.kind);
  });

  // scaling
  std::vector<std::string> scaling_arch, scaling_models;
  std::size_t scaling_input = 196;
  std::optional<std::string> scaling_out;
  auto* scaling_cmd = app.add_subcommand("scaling", "Encoding size per architecture");
  scaling_cmd->add_option("--arch", scaling_arch, "layer widths after the input, e.g. 30x20x10x1");
  scaling_cmd->add_option("--input", scaling_input, "input width for --arch entries")->check(CLI::PositiveNumber);
  scaling_cmd->add_option("--model", scaling_models, "model JSON files")->check(CLI::ExistingFile);
  scaling_cmd->add_option("--out", scaling_out, "write scaling.json and scaling.md here");
  scaling_cmd->callback([&] {
    std::vector<Mlp> models;
    for (const auto& a : scaling_arch) {
      std::vector<std::size_t> widths{scaling_input};
      for (auto w : parse_architecture(a)) widths.push_back(w);
      Rng rng(1);
      const auto arch = std::vector<std::size_t>(widths.begin() + 1, widths.end());
      models.push_back(init_params(scaling_input, arch, rng).to_mlp());
    }
    for (const auto& p : scaling_models) models.push_back(load_model(p));
    const auto rows = scaling_report(models);
    if (scaling_out) {
      fs::create_directories(*scaling_out);
      write_text_file(fs::path(*scaling_out) / "scaling.json", to_json(rows).dump(2) + "\n");
      write_text_file(fs::path(*scaling_out) / "scaling.md", scaling_markdown(rows));
    }
    std::cout << scaling_markdown(rows);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return status;
}
