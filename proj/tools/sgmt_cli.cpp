// SPDX-License-Identifier: Apache-2.0
//
// sgmt: scene-graph guided translation toolkit.
//
// Exit codes: 0 ok, 1 usage, 2 missing/unreadable file, 3 validation
// failure, 4 numeric failure. Errors go to stderr as one line:
//   error: {"code":N,"message":"..."}

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "sgmt/bleu.hpp"
#include "sgmt/checkpoint.hpp"
#include "sgmt/embeddings.hpp"
#include "sgmt/error.hpp"
#include "sgmt/gradcheck.hpp"
#include "sgmt/io.hpp"
#include "sgmt/model.hpp"
#include "sgmt/scene_graph.hpp"
#include "sgmt/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sgmt;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

void emit(const std::string& output, const std::string& text) {
  if (output.empty() || output == "-") {
    std::cout << text;
  } else {
    io::write_file_atomic(output, text);
  }
}

std::string input(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing input file: " + path);
  return io::read_file(path);
}

json malformed_json(const std::vector<MalformedRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back({{"line", r.line}, {"reason", r.reason}});
  return arr;
}

ParseResult parse(const std::string& path, Origin origin) {
  const std::string text = input(path);
  return origin == Origin::Isg ? parse_isg_jsonl(text) : parse_tsg_triplets(text);
}

// Parsed file whose every line must be a valid graph (graph i <-> line i).
std::vector<SceneGraph> parse_strict(const std::string& path, Origin origin) {
  ParseResult r = parse(path, origin);
  if (!r.malformed.empty()) {
    const auto& m = r.malformed.front();
    throw ValidationError(path + ":" + std::to_string(m.line) + ": " + m.reason);
  }
  return std::move(r.graphs);
}

std::vector<SuperNodeGraph> read_graphs(const std::string& path) {
  std::vector<SuperNodeGraph> out;
  const auto lines = io::split_lines(input(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(deserialize_graph(lines[i]));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> read_sentences(const std::string& path) { return io::split_lines(input(path)); }

std::vector<std::string> keys_for(const std::string& keys_path, std::size_t count, const std::string& prefix) {
  if (!keys_path.empty()) {
    auto keys = read_sentences(keys_path);
    if (keys.size() != count) {
      throw ValidationError("key file has " + std::to_string(keys.size()) + " lines, expected " +
                            std::to_string(count));
    }
    return keys;
  }
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < count; ++i) keys.push_back(prefix + std::to_string(i));
  return keys;
}

std::string graphs_jsonl(const std::vector<SuperNodeGraph>& graphs) {
  std::string out;
  for (const auto& g : graphs) out += serialize_graph(g) + "\n";
  return out;
}

std::vector<ParallelExample> load_examples(const std::string& src, const std::string& tgt, const std::string& graphs,
                                           const Vocab& vocab, const EmbeddingProvider& provider) {
  const auto sources = read_sentences(src);
  const auto targets = read_sentences(tgt);
  const auto gs = read_graphs(graphs);
  if (sources.size() != targets.size() || sources.size() != gs.size()) {
    throw ValidationError("line counts differ: " + std::to_string(sources.size()) + " sources, " +
                          std::to_string(targets.size()) + " targets, " + std::to_string(gs.size()) + " graphs");
  }
  std::vector<ParallelExample> out;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    ParallelExample ex{embed_graph(gs[i], provider), vocab.encode(sources[i]), vocab.encode(targets[i])};
    if (ex.source.empty()) throw ValidationError(src + ":" + std::to_string(i + 1) + ": empty source sentence");
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ParseArgs {
  std::string input, output;
};

int run_parse(const ParseArgs& a, Origin origin) {
  const ParseResult r = parse(a.input, origin);
  std::string out;
  for (const auto& g : r.graphs) out += to_jsonl_record(g) + "\n";
  emit(a.output, out);
  json report = {{"graphs", r.graphs.size()}, {"malformed", malformed_json(r.malformed)}};
  (a.output.empty() ? std::cerr : std::cout) << report.dump() << "\n";
  return r.malformed.empty() ? 0 : kExitValidation;
}

struct ValidateArgs {
  std::string input, output;
  bool tsg = false;
};

int run_validate(const ValidateArgs& a) {
  const ParseResult r = parse(a.input, a.tsg ? Origin::Tsg : Origin::Isg);
  std::string out;
  for (std::size_t i = 0; i < r.graphs.size(); ++i) {
    const ValidationReport v = validate(r.graphs[i]);
    json j = {{"line", r.lines[i]},
              {"connected", v.connected},
              {"isolated_node_ids", v.isolated_node_ids},
              {"malformed_records", malformed_json(v.malformed_records)}};
    out += j.dump() + "\n";
  }
  for (const auto& m : r.malformed) {
    out += json({{"line", m.line}, {"malformed_records", malformed_json({m})}}).dump() + "\n";
  }
  emit(a.output, out);
  return r.malformed.empty() ? 0 : kExitValidation;
}

struct BuildArgs {
  std::string isg, tsg, keys, output;
};

int run_build_msg(const BuildArgs& a) {
  const auto isgs = parse_strict(a.isg, Origin::Isg);
  const auto tsgs = parse_strict(a.tsg, Origin::Tsg);
  if (isgs.size() != tsgs.size()) {
    throw ValidationError("ISG file has " + std::to_string(isgs.size()) + " graphs, TSG file " +
                          std::to_string(tsgs.size()));
  }
  const auto keys = keys_for(a.keys, isgs.size(), "image_");
  std::vector<SuperNodeGraph> out;
  for (std::size_t i = 0; i < isgs.size(); ++i) out.push_back(build_msg(isgs[i], tsgs[i], keys[i]));
  emit(a.output, graphs_jsonl(out));
  return 0;
}

int run_build_lsg(const BuildArgs& a) {
  const auto tsgs = parse_strict(a.tsg, Origin::Tsg);
  const auto keys = keys_for(a.keys, tsgs.size(), "text_");
  std::vector<SuperNodeGraph> out;
  for (std::size_t i = 0; i < tsgs.size(); ++i) out.push_back(build_lsg(tsgs[i], keys[i]));
  emit(a.output, graphs_jsonl(out));
  return 0;
}

struct EmbedArgs {
  std::string graphs, provider = "stub", output;
  int dim = 16;
};

int run_embed(const EmbedArgs& a) {
  const auto provider = make_provider(a.provider, a.dim);
  std::set<std::string> labels{std::string(kGlobalRelation)};
  for (const auto& g : read_graphs(a.graphs)) {
    for (const auto& n : g.ordinary.nodes) labels.insert(n.label);
    for (const auto& e : g.ordinary.edges) labels.insert(e.relation);
    labels.insert(g.super_node.embedding_key);
  }
  EmbeddingStore store;
  store.dim = provider->dim();
  for (const auto& l : labels) store.records.emplace(l, provider->embed(l));
  emit(a.output, format_store(store));
  return 0;
}

struct TrainArgs {
  std::string config, train_src, train_tgt, train_graphs, valid_src, valid_tgt, valid_graphs;
  std::string init, output, metrics, vocab, stage;
  bool no_gate = false, skip_stage1 = false, unfreeze_encoder = false, freeze_adapter = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = parse_train_config(input(a.config));
  if (!a.stage.empty()) cfg.stage = parse_stage(a.stage);
  cfg.no_gate = cfg.no_gate || a.no_gate;
  cfg.skip_stage1 = cfg.skip_stage1 || a.skip_stage1;
  cfg.unfreeze_encoder = cfg.unfreeze_encoder || a.unfreeze_encoder;
  cfg.freeze_adapter_stage2 = a.freeze_adapter;
  if (a.seed) cfg.seed = *a.seed;
  if (a.max_epochs) cfg.max_epochs = *a.max_epochs;
  cfg.validate();
  if (cfg.stage != Stage::Two && (cfg.skip_stage1 || !a.init.empty())) {
    throw ValidationError("--skip-stage1 and --init apply to stage two only");
  }

  std::optional<Checkpoint> init;
  std::optional<Model> model;
  if (cfg.stage == Stage::Two && !cfg.skip_stage1) {
    if (a.init.empty()) throw ValidationError("stage two needs --init <stage-one checkpoint> (or --skip-stage1)");
    if (!fs::exists(a.init)) throw IoError("missing input file: " + a.init);
    init = read_checkpoint(a.init);
    model.emplace(Model::from_checkpoint(*init));
    const ModelConfig& mc = model->config();
    if (mc.dim != cfg.dim || mc.layers != cfg.layers || mc.heads != cfg.heads) {
      throw ValidationError("config dim/layers/heads differ from the stage-one checkpoint");
    }
  } else {
    std::vector<std::string> corpus = read_sentences(a.train_src);
    for (auto& s : read_sentences(a.train_tgt)) corpus.push_back(std::move(s));
    if (!a.vocab.empty()) {
      for (auto& s : read_sentences(a.vocab)) corpus.push_back(std::move(s));
    }
    ModelConfig mc;
    mc.dim = cfg.dim;
    mc.layers = cfg.layers;
    mc.heads = cfg.heads;
    mc.provider = cfg.provider;
    model.emplace(mc, Vocab::from_corpus(corpus));
    model->init(cfg.seed);
  }

  const auto provider = make_provider(model->config().provider, model->config().dim);
  const auto train = load_examples(a.train_src, a.train_tgt, a.train_graphs, model->vocab(), *provider);
  std::vector<ParallelExample> valid;
  const bool has_valid = !a.valid_src.empty() || !a.valid_tgt.empty() || !a.valid_graphs.empty();
  if (has_valid) valid = load_examples(a.valid_src, a.valid_tgt, a.valid_graphs, model->vocab(), *provider);

  std::ostringstream metrics;
  TrainOptions opts;
  opts.metrics = &metrics;
  opts.skip_validation = !has_valid;
  TrainResult result;
  switch (cfg.stage) {
    case Stage::One: result = train_stage1(*model, train, valid, cfg, opts); break;
    case Stage::Two: result = train_stage2(*model, train, valid, cfg, init ? &*init : nullptr, opts); break;
    case Stage::OneStageMultimodal: result = train_one_stage_multimodal(*model, train, valid, cfg, opts); break;
  }
  if (!a.metrics.empty()) io::write_file_atomic(a.metrics, metrics.str());
  write_checkpoint(result.best, a.output);
  json summary = {{"stage", std::string(to_string(cfg.stage))},
                  {"best_epoch", result.best_epoch},
                  {"epochs", result.history.size()},
                  {"steps", result.steps},
                  {"checkpoint", a.output}};
  if (cfg.stage == Stage::Two) summary["shared_weights_verified"] = result.shared_weights_verified;
  std::cout << summary.dump() << "\n";
  return 0;
}

struct TranslateArgs {
  std::string checkpoint, src, graphs, tsg, mode = "lsg", provider, output;
  int beam = 5;
  int max_len = 64;
};

int run_translate(const TranslateArgs& a) {
  if (a.mode != "lsg" && a.mode != "msg") throw ValidationError("--mode must be lsg or msg");
  const bool msg = a.mode == "msg";
  if (msg && a.graphs.empty()) throw ValidationError("multimodal translation needs --graphs (MSG file)");
  if (!msg && a.graphs.empty() && a.tsg.empty()) throw ValidationError("lsg translation needs --graphs or --tsg");
  if (!a.graphs.empty() && !a.tsg.empty()) throw ValidationError("give either --graphs or --tsg, not both");
  if (!fs::exists(a.checkpoint)) throw IoError("missing input file: " + a.checkpoint);

  const auto sources = read_sentences(a.src);
  std::vector<SuperNodeGraph> graphs;
  if (!a.graphs.empty()) {
    graphs = read_graphs(a.graphs);
  } else {
    const auto tsgs = parse_strict(a.tsg, Origin::Tsg);
    if (tsgs.size() != sources.size()) throw ValidationError("TSG and source line counts differ");
    for (std::size_t i = 0; i < tsgs.size(); ++i) graphs.push_back(build_lsg(tsgs[i], sources[i]));
  }
  if (graphs.size() != sources.size()) {
    throw ValidationError("graph and source line counts differ: " + std::to_string(graphs.size()) + " vs " +
                          std::to_string(sources.size()));
  }
  const SuperKind want = msg ? SuperKind::Image : SuperKind::Text;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i].kind() != want) {
      throw ValidationError("graph/mode mismatch at line " + std::to_string(i + 1) + ": expected " +
                            std::string(to_string(want)) + " super node");
    }
  }

  const Model model = Model::from_checkpoint(read_checkpoint(a.checkpoint));
  const auto provider =
      make_provider(a.provider.empty() ? model.config().provider : a.provider, model.config().dim);
  std::string out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto ids = model.vocab().encode(sources[i]);
    if (ids.empty()) throw ValidationError(a.src + ":" + std::to_string(i + 1) + ": empty source sentence");
    const Hypothesis h = model.translate(embed_graph(graphs[i], *provider), ids, a.beam, a.max_len);
    out += model.vocab().decode(h.tokens) + "\n";
  }
  emit(a.output, out);
  return 0;
}

struct BleuArgs {
  std::string hyp, ref, smoothing = "none", output;
};

int run_eval_bleu(const BleuArgs& a) {
  const auto report = corpus_bleu(read_sentences(a.hyp), read_sentences(a.ref), parse_smoothing(a.smoothing));
  emit(a.output, to_json(report) + "\n");
  return 0;
}

int run_gradcheck(const GradcheckOptions& o, double tolerance) {
  const GradcheckReport r = adapter_gradcheck(o);
  std::cout << to_json(r) << "\n";
  std::cout << "max relative error " << r.max_rel_error << (r.max_rel_error < tolerance ? " < " : " >= ")
            << tolerance << "\n";
  return r.max_rel_error < tolerance ? 0 : kExitNumeric;
}

int fail(int code, const std::string& message) {
  std::cerr << "error: " << json({{"code", code}, {"message", message}}).dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-graph guided translation: graph building, adapter training and image-free translation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sgmt 0.1.0");

  ParseArgs isg_args, tsg_args;
  auto* parse_isg = app.add_subcommand("parse-isg", "Parse image scene graph JSONL, report malformed lines");
  parse_isg->add_option("--input", isg_args.input, "ISG JSONL file")->required();
  parse_isg->add_option("--output", isg_args.output, "Normalized JSONL output (default stdout)");
  auto* parse_tsg = app.add_subcommand("parse-tsg", "Parse text scene graph triplet JSONL, report malformed lines");
  parse_tsg->add_option("--input", tsg_args.input, "TSG JSONL file")->required();
  parse_tsg->add_option("--output", tsg_args.output, "Normalized JSONL output (default stdout)");

  ValidateArgs val_args;
  auto* validate_cmd = app.add_subcommand("validate", "Connectivity report per graph (JSONL)");
  validate_cmd->add_option("--input", val_args.input, "Scene graph JSONL file")->required();
  validate_cmd->add_flag("--tsg", val_args.tsg, "Input holds text scene graphs (default: image)");
  validate_cmd->add_option("--output", val_args.output, "Report output (default stdout)");

  BuildArgs msg_args, lsg_args;
  auto* build_msg_cmd = app.add_subcommand("build-msg", "Build multimodal graphs from ISG + TSG files, line by line");
  build_msg_cmd->add_option("--isg", msg_args.isg, "ISG JSONL file")->required();
  build_msg_cmd->add_option("--tsg", msg_args.tsg, "TSG JSONL file")->required();
  build_msg_cmd->add_option("--keys", msg_args.keys, "Image embedding key per line (default image_<i>)");
  build_msg_cmd->add_option("--output", msg_args.output, "Serialized graphs, one per line (default stdout)");
  auto* build_lsg_cmd = app.add_subcommand("build-lsg", "Build linguistic graphs from a TSG file");
  build_lsg_cmd->add_option("--tsg", lsg_args.tsg, "TSG JSONL file")->required();
  build_lsg_cmd->add_option("--keys", lsg_args.keys, "Text embedding key per line, e.g. the source file");
  build_lsg_cmd->add_option("--output", lsg_args.output, "Serialized graphs, one per line (default stdout)");

  EmbedArgs embed_args;
  auto* embed_cmd = app.add_subcommand("embed", "Write an embedding store covering every label of a graph file");
  embed_cmd->add_option("--graphs", embed_args.graphs, "Serialized graph file")->required();
  embed_cmd->add_option("--provider", embed_args.provider, "stub or file:PATH")->capture_default_str();
  embed_cmd->add_option("--dim", embed_args.dim, "Embedding width (stub provider)")->capture_default_str();
  embed_cmd->add_option("--output", embed_args.output, "Store JSONL (default stdout)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one stage; writes the best-BLEU checkpoint");
  train_cmd->add_option("--config", tr.config, "key=value config file")->required();
  train_cmd->add_option("--train-src", tr.train_src, "Training source sentences")->required();
  train_cmd->add_option("--train-tgt", tr.train_tgt, "Training target sentences")->required();
  train_cmd->add_option("--train-graphs", tr.train_graphs, "Training graphs (MSG or LSG per stage)")->required();
  train_cmd->add_option("--valid-src", tr.valid_src, "Validation source sentences");
  train_cmd->add_option("--valid-tgt", tr.valid_tgt, "Validation target sentences");
  train_cmd->add_option("--valid-graphs", tr.valid_graphs, "Validation graphs");
  train_cmd->add_option("--init", tr.init, "Stage-one checkpoint (stage two)");
  train_cmd->add_option("--output", tr.output, "Checkpoint output path")->required();
  train_cmd->add_option("--metrics", tr.metrics, "Per-epoch metrics JSONL output");
  train_cmd->add_option("--vocab", tr.vocab, "Extra vocabulary lines (whitespace tokens)");
  train_cmd->add_option("--stage", tr.stage, "one, two or one-multimodal (overrides config)")
      ->check(CLI::IsMember({"one", "two", "one-multimodal"}));
  train_cmd->add_flag("--no-gate", tr.no_gate, "Replace gated fusion by H' = LayerNorm(O)");
  train_cmd->add_flag("--skip-stage1", tr.skip_stage1, "Stage two from a fresh initialisation");
  train_cmd->add_flag("--unfreeze-encoder", tr.unfreeze_encoder, "Train the encoder in stage one");
  train_cmd->add_flag("--freeze-adapter", tr.freeze_adapter, "Keep the adapter fixed in stage two");
  train_cmd->add_option("--seed", tr.seed, "Overrides the config seed");
  train_cmd->add_option("--max-epochs", tr.max_epochs, "Overrides the config max_epochs");

  TranslateArgs tl;
  auto* translate_cmd = app.add_subcommand("translate", "Beam-search translation, one line per source line");
  translate_cmd->add_option("--checkpoint", tl.checkpoint, "Model checkpoint")->required();
  translate_cmd->add_option("--src", tl.src, "Source sentences")->required();
  translate_cmd->add_option("--graphs", tl.graphs, "Serialized graphs, one per source line");
  translate_cmd->add_option("--tsg", tl.tsg, "TSG JSONL; linguistic graphs are built on the fly");
  translate_cmd->add_option("--mode", tl.mode, "lsg (image-free) or msg (multimodal)")
      ->check(CLI::IsMember({"lsg", "msg"}))
      ->capture_default_str();
  translate_cmd->add_option("--provider", tl.provider, "Override the checkpoint's embedding provider");
  translate_cmd->add_option("--beam", tl.beam, "Beam size")->capture_default_str();
  translate_cmd->add_option("--max-len", tl.max_len, "Maximum output tokens")->capture_default_str();
  translate_cmd->add_option("--output", tl.output, "Output file (default stdout)");

  BleuArgs bl;
  auto* bleu_cmd = app.add_subcommand("eval-bleu", "Corpus BLEU-4 report as JSON");
  bleu_cmd->add_option("--hyp", bl.hyp, "Hypotheses, one per line")->required();
  bleu_cmd->add_option("--ref", bl.ref, "References, one per line")->required();
  bleu_cmd->add_option("--smoothing", bl.smoothing, "none or add_one")
      ->check(CLI::IsMember({"none", "add_one"}))
      ->capture_default_str();
  bleu_cmd->add_option("--output", bl.output, "Output file (default stdout)");

  GradcheckOptions gc;
  double tolerance = 1e-4;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of adapter gradients");
  grad_cmd->add_option("--dim", gc.dim, "Model width")->capture_default_str();
  grad_cmd->add_option("--layers", gc.layers, "Message-passing layers")->capture_default_str();
  grad_cmd->add_option("--heads", gc.heads, "Fusion heads")->capture_default_str();
  grad_cmd->add_option("--length", gc.length, "Rows of H")->capture_default_str();
  grad_cmd->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  grad_cmd->add_option("--step", gc.step, "Central difference step")->capture_default_str();
  grad_cmd->add_flag("--no-gate", gc.no_gate, "Check the no-gate fusion path");
  grad_cmd->add_option("--tolerance", tolerance, "Pass threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, e.what());
  }

  try {
    if (*parse_isg) return run_parse(isg_args, Origin::Isg);
    if (*parse_tsg) return run_parse(tsg_args, Origin::Tsg);
    if (*validate_cmd) return run_validate(val_args);
    if (*build_msg_cmd) return run_build_msg(msg_args);
    if (*build_lsg_cmd) return run_build_lsg(lsg_args);
    if (*embed_cmd) return run_embed(embed_args);
    if (*train_cmd) return run_train(tr);
    if (*translate_cmd) return run_translate(tl);
    if (*bleu_cmd) return run_eval_bleu(bl);
    if (*grad_cmd) return run_gradcheck(gc, tolerance);
  } catch (const IoError& e) {
    return fail(kExitIo, e.what());
  } catch (const ValidationError& e) {
    return fail(kExitValidation, e.what());
  } catch (const NumericError& e) {
    return fail(kExitNumeric, e.what());
  } catch (const std::exception& e) {
    return fail(kExitValidation, e.what());
  }
  return kExitUsage;
}
