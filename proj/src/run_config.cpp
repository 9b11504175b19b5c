#include "safl/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "safl/errors.hpp"

namespace safl {

namespace {

std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return std::isspace(c); };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: " + key + ": expected boolean, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": expected integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": expected unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": expected number, got '" + v + "'");
  }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  if (out.empty()) throw std::invalid_argument("config: " + key + ": empty list");
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void RunConfig::apply_ini(const std::string& text) {
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config: line " + std::to_string(lineno) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;

    if (full == "run.strategy") strategy_name = value;
    else if (full == "run.rounds") rounds = parse_int(full, value);
    else if (full == "run.clients") clients = parse_int(full, value);
    else if (full == "run.batch_size") batch_size = parse_int(full, value);
    else if (full == "run.local_epochs") local_epochs = parse_int(full, value);
    else if (full == "run.lr") lr = parse_double(full, value);
    else if (full == "run.warmup_steps") warmup_steps = parse_int(full, value);
    else if (full == "run.k") k = parse_int(full, value);
    else if (full == "run.bottom_frozen") bottom_frozen = parse_int(full, value);
    else if (full == "run.seed") seed = parse_u64(full, value);
    else if (full == "run.threads") threads = parse_int(full, value);
    else if (full == "run.out_dir") out_dir = value;
    else if (full == "run.eval_fraction") eval_fraction = parse_double(full, value);
    else if (full == "encoder.num_layers") encoder.num_layers = parse_int(full, value);
    else if (full == "encoder.num_heads") encoder.num_heads = parse_int(full, value);
    else if (full == "encoder.d_model") encoder.d_model = parse_int(full, value);
    else if (full == "encoder.d_ff") encoder.d_ff = parse_int(full, value);
    else if (full == "encoder.vocab_size") encoder.vocab_size = parse_int(full, value);
    else if (full == "encoder.max_seq_len") encoder.max_seq_len = parse_int(full, value);
    else if (full == "corpus.num_sequences") corpus.num_sequences = parse_int(full, value);
    else if (full == "corpus.seq_len_min") corpus.seq_len_min = parse_int(full, value);
    else if (full == "corpus.seq_len_max") corpus.seq_len_max = parse_int(full, value);
    else if (full == "corpus.num_entity_types") corpus.num_entity_types = parse_int(full, value);
    else if (full == "corpus.entity_density") corpus.entity_density = parse_double(full, value);
    else if (full == "corpus.max_span_len") corpus.max_span_len = parse_int(full, value);
    else if (full == "corpus.begin_bias") corpus.begin_bias = parse_double(full, value);
    else if (full == "partition.alpha") dirichlet_alpha = parse_double(full, value);
    else if (full == "selector.task_tokens") task_tokens = value;
    else if (full == "selector.profile_examples") profile_examples = parse_int(full, value);
    else if (full == "selector.query_side") query_side = parse_bool(full, value);
    else if (full == "selector.global_consensus") global_consensus = parse_bool(full, value);
    else if (full == "selector.train_embedding") train_embedding = parse_bool(full, value);
    else if (full == "selector.train_classifier") train_classifier = parse_bool(full, value);
    else if (full == "privacy.enabled") privacy_enabled = parse_bool(full, value);
    else if (full == "privacy.clip_norm") clip_norm = parse_double(full, value);
    else if (full == "privacy.noise_multiplier") noise_multiplier = parse_double(full, value);
    else if (full == "privacy.delta") dp_delta = parse_double(full, value);
    else if (full == "privacy.eps_target") eps_target = parse_double(full, value);
    else if (full == "transmit.prune_fraction") prune_fraction = parse_double(full, value);
    else if (full == "transmit.wire_bits") wire_bits = parse_int(full, value);
    else throw std::invalid_argument("config: unknown key '" + full + "'");
  }
}

RunConfig RunConfig::from_ini_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig rc;
  rc.apply_ini(ss.str());
  return rc;
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  os << "[run]\n";
  os << "strategy = " << strategy_name << "\n";
  os << "rounds = " << rounds << "\n";
  os << "clients = " << clients << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "local_epochs = " << local_epochs << "\n";
  os << "lr = " << format_double(lr) << "\n";
  os << "warmup_steps = " << warmup_steps << "\n";
  os << "k = " << k << "\n";
  os << "bottom_frozen = " << bottom_frozen << "\n";
  os << "seed = " << seed << "\n";
  os << "threads = " << threads << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "eval_fraction = " << format_double(eval_fraction) << "\n";
  os << "\n[encoder]\n";
  os << "num_layers = " << encoder.num_layers << "\n";
  os << "num_heads = " << encoder.num_heads << "\n";
  os << "d_model = " << encoder.d_model << "\n";
  os << "d_ff = " << encoder.d_ff << "\n";
  os << "vocab_size = " << encoder.vocab_size << "\n";
  os << "max_seq_len = " << encoder.max_seq_len << "\n";
  os << "\n[corpus]\n";
  os << "num_sequences = " << corpus.num_sequences << "\n";
  os << "seq_len_min = " << corpus.seq_len_min << "\n";
  os << "seq_len_max = " << corpus.seq_len_max << "\n";
  os << "num_entity_types = " << corpus.num_entity_types << "\n";
  os << "entity_density = " << format_double(corpus.entity_density) << "\n";
  os << "max_span_len = " << corpus.max_span_len << "\n";
  os << "begin_bias = " << format_double(corpus.begin_bias) << "\n";
  os << "\n[partition]\n";
  os << "alpha = " << format_double(dirichlet_alpha) << "\n";
  os << "\n[selector]\n";
  os << "task_tokens = " << task_tokens << "\n";
  os << "profile_examples = " << profile_examples << "\n";
  os << "query_side = " << (query_side ? "true" : "false") << "\n";
  os << "global_consensus = " << (global_consensus ? "true" : "false") << "\n";
  os << "train_embedding = " << (train_embedding ? "true" : "false") << "\n";
  os << "train_classifier = " << (train_classifier ? "true" : "false") << "\n";
  os << "\n[privacy]\n";
  os << "enabled = " << (privacy_enabled ? "true" : "false") << "\n";
  os << "clip_norm = " << format_double(clip_norm) << "\n";
  os << "noise_multiplier = " << format_double(noise_multiplier) << "\n";
  os << "delta = " << format_double(dp_delta) << "\n";
  os << "eps_target = " << format_double(eps_target) << "\n";
  os << "\n[transmit]\n";
  os << "prune_fraction = " << format_double(prune_fraction) << "\n";
  os << "wire_bits = " << wire_bits << "\n";
  return os.str();
}

void RunConfig::validate() const {
  if (clients < 1) throw std::invalid_argument("config: run.clients must be >= 1");
  if (rounds < 0) throw std::invalid_argument("config: run.rounds must be >= 0");
  if (eval_fraction <= 0.0 || eval_fraction >= 1.0) {
    throw std::invalid_argument("config: run.eval_fraction must be in (0,1)");
  }
  if (wire_bits != 64 && wire_bits != 32) {
    throw std::invalid_argument("config: transmit.wire_bits must be 64 or 32");
  }
  if (corpus.seq_len_max > encoder.max_seq_len) {
    throw std::invalid_argument("config: corpus.seq_len_max exceeds encoder.max_seq_len");
  }
}

TaskTokenSpec resolve_task_tokens(const std::string& spec_text, const VocabLayout& vocab) {
  TaskTokenSpec spec;
  if (spec_text == "cls") {
    spec.mode = TaskTokenSpec::Mode::TokenIds;
    spec.values = {vocab.cls_id};
  } else if (spec_text == "entities") {
    spec.mode = TaskTokenSpec::Mode::TokenIds;
    for (int id : vocab.entity_token_ids()) spec.values.insert(id);
  } else if (spec_text.rfind("ids:", 0) == 0) {
    spec.mode = TaskTokenSpec::Mode::TokenIds;
    for (int id : parse_int_list("selector.task_tokens", spec_text.substr(4))) {
      spec.values.insert(id);
    }
  } else if (spec_text.rfind("positions:", 0) == 0) {
    spec.mode = TaskTokenSpec::Mode::Positions;
    for (int p : parse_int_list("selector.task_tokens", spec_text.substr(10))) {
      spec.values.insert(p);
    }
  } else {
    throw std::invalid_argument("config: selector.task_tokens: expected cls | entities | ids:... | "
                                "positions:..., got '" + spec_text + "'");
  }
  spec.validate();
  return spec;
}

RunBundle assemble(const RunConfig& rc) {
  rc.validate();

  CorpusSpec cs = rc.corpus;
  cs.vocab_size = rc.encoder.vocab_size;
  cs.seed = rc.seed;

  RunBundle bundle;
  bundle.corpus = generate(cs);

  const int n = static_cast<int>(bundle.corpus.sequences.size());
  const int n_eval = std::max(1, static_cast<int>(n * rc.eval_fraction));
  const int n_train = n - n_eval;
  if (n_train < rc.clients) {
    throw std::invalid_argument("config: fewer training sequences than clients");
  }
  for (int i = n_train; i < n; ++i) bundle.eval_indices.push_back(i);

  // Partition the training prefix; its indices coincide with corpus indices.
  LabeledCorpus train_view;
  train_view.spec = bundle.corpus.spec;
  train_view.spec.num_sequences = n_train;
  train_view.vocab = bundle.corpus.vocab;
  train_view.sequences.assign(bundle.corpus.sequences.begin(),
                              bundle.corpus.sequences.begin() + n_train);
  PartitionSpec ps;
  ps.num_clients = rc.clients;
  ps.dirichlet_alpha = rc.dirichlet_alpha;
  ps.seed = rc.seed;
  bundle.shards = partition(train_view, ps);

  FedConfig& fed = bundle.fed;
  fed.encoder = rc.encoder;
  fed.encoder.num_labels = bundle.corpus.spec.num_labels();
  fed.strategy = strategy_from_name(rc.strategy_name, rc.k, rc.bottom_frozen);
  fed.rounds = rc.rounds;
  fed.batch_size = rc.batch_size;
  fed.local_epochs = rc.local_epochs;
  fed.lr = rc.lr;
  fed.warmup_steps = rc.warmup_steps;
  fed.task_tokens = resolve_task_tokens(rc.task_tokens, bundle.corpus.vocab);
  fed.profile_examples = rc.profile_examples;
  fed.query_side_scores = rc.query_side;
  fed.global_consensus = rc.global_consensus;
  fed.train_embedding = rc.train_embedding;
  fed.train_classifier = rc.train_classifier;
  fed.privacy.enabled = rc.privacy_enabled;
  fed.privacy.clip_norm = rc.clip_norm;
  fed.privacy.noise_multiplier = rc.noise_multiplier;
  fed.privacy.delta = rc.dp_delta;
  fed.prune_fraction = rc.prune_fraction;
  fed.wire = rc.wire_bits == 64 ? WirePrecision::F64 : WirePrecision::F32;
  fed.master_seed = rc.seed;
  fed.threads = rc.threads;
  fed.validate();
  return bundle;
}

}  // namespace safl
