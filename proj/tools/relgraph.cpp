// Command line driver. Per-command flags mirror flat `key = value` config
// files; a --config file is expanded into flags ahead of the explicit ones,
// so explicit flags win.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relgraph/commands.hpp"
#include "relgraph/common.hpp"

namespace {

using relgraph::OptSpec;
using relgraph::RuntimeFailure;

void bind_options(CLI::App* sub, const std::vector<OptSpec>& specs) {
  sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  for (const auto& s : specs) {
    CLI::Option* opt = std::visit(
        [&](auto* field) -> CLI::Option* {
          using T = std::remove_pointer_t<decltype(field)>;
          if constexpr (std::is_same_v<T, bool>)
            return sub->add_flag("--" + s.key, *field, s.help);
          else
            return sub->add_option("--" + s.key, *field, s.help);
        },
        s.field);
    if (s.required) opt->required();
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// `key = value` lines to --key=value tokens; blanks and # comments skipped
std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw RuntimeFailure("config line has no '=': " + line);
    const std::string key = trim(body.substr(0, eq));
    if (key.empty() || key.find(' ') != std::string::npos || key[0] == '-')
      throw RuntimeFailure("bad config key in line: " + line);
    const std::string value = trim(body.substr(eq + 1));
    if (value.empty()) {
      // a bare `--key=` would swallow the next token as its value
      tokens.push_back("--" + key);
      tokens.push_back("");
    } else {
      tokens.push_back("--" + key + "=" + value);
    }
  }
  return tokens;
}

// args: argv without the program name. Config tokens go right after the
// command name so every explicit flag lands later and takes precedence.
std::vector<std::string> expand_configs(const std::vector<std::string>& args) {
  std::vector<std::string> head, tail;
  std::vector<std::string> files;
  for (size_t i = 0; i < args.size(); ++i) {
    if (i == 0 && !args[i].empty() && args[i][0] != '-') {
      head.push_back(args[i]);
    } else if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw RuntimeFailure("--config needs a file path");
      files.push_back(args[++i]);
    } else if (args[i].rfind("--config=", 0) == 0) {
      files.push_back(args[i].substr(9));
    } else {
      tail.push_back(args[i]);
    }
  }
  for (const auto& f : files) {
    const auto toks = config_tokens(f);
    head.insert(head.end(), toks.begin(), toks.end());
  }
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relation-aware heterogeneous graph representation learning"};
  app.require_subcommand(1);

  relgraph::GenSynthOptions gen;
  relgraph::TrainOptions cls, lp;
  relgraph::ClusterOptions clu;
  relgraph::EmbedOptions emb;

  const auto gen_t = relgraph::option_table(gen);
  const auto cls_t = relgraph::classify_option_table(cls);
  const auto lp_t = relgraph::linkpred_option_table(lp);
  const auto clu_t = relgraph::option_table(clu);
  const auto emb_t = relgraph::option_table(emb);

  auto* s_gen = app.add_subcommand("gen-synth", "generate a planted-class dataset");
  bind_options(s_gen, gen_t);
  s_gen->callback([&] { relgraph::cmd_gen_synth(gen, relgraph::render_config(gen_t)); });

  auto* s_cls = app.add_subcommand("train-classify", "train for node classification");
  bind_options(s_cls, cls_t);
  s_cls->callback(
      [&] { relgraph::cmd_train_classify(cls, relgraph::render_config(cls_t)); });

  auto* s_lp = app.add_subcommand("train-linkpred", "train for link prediction");
  bind_options(s_lp, lp_t);
  s_lp->callback(
      [&] { relgraph::cmd_train_linkpred(lp, relgraph::render_config(lp_t)); });

  auto* s_clu = app.add_subcommand("cluster", "score checkpoint embeddings by clustering");
  bind_options(s_clu, clu_t);
  s_clu->callback([&] { relgraph::cmd_cluster(clu, relgraph::render_config(clu_t)); });

  auto* s_emb = app.add_subcommand("embed", "export embeddings and relation weights");
  bind_options(s_emb, emb_t);
  s_emb->callback([&] { relgraph::cmd_embed(emb, relgraph::render_config(emb_t)); });

  try {
    std::vector<std::string> args =
        expand_configs(std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
