#include "iml/experiment_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace iml {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string fmt_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(seeds[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw format_error("config: bad number for " + key + ": '" + v + "'");
  }
}

std::int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw format_error("config: bad integer for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    unsigned long long i = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw format_error("config: bad integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw format_error("config: bad bool for " + key + ": '" + v + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_u64(item, "seeds"));
  }
  return out;
}

}  // namespace

std::string emit_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[run]\n";
  out << "name = " << c.name << "\n";
  out << "out_dir = " << c.out_dir << "\n";
  out << "seeds = " << fmt_seeds(c.seeds) << "\n";

  out << "\n[data]\n";
  out << "source = " << (c.data.source == DataSource::Blobs ? "blobs" : "idx") << "\n";
  if (c.data.source == DataSource::Idx) {
    out << "idx_images = " << c.data.idx_images << "\n";
    out << "idx_labels = " << c.data.idx_labels << "\n";
  }
  out << "blob_dim = " << c.data.blob_dim << "\n";
  out << "blob_classes = " << c.data.blob_classes << "\n";
  out << "blob_per_class = " << c.data.blob_per_class << "\n";
  out << "blob_spread = " << fmt_double(c.data.blob_spread) << "\n";
  out << "blob_seed = " << c.data.blob_seed << "\n";
  out << "downsample = " << fmt_bool(c.data.downsample) << "\n";

  out << "\n[split]\n";
  out << "n_train = " << c.data.split.n_train << "\n";
  out << "n_val = " << c.data.split.n_val << "\n";
  out << "n_test = " << c.data.split.n_test << "\n";
  out << "seed = " << c.data.split.seed << "\n";
  out << "stratified = " << fmt_bool(c.data.split.stratified) << "\n";

  const MetaConfig& m = c.meta;
  out << "\n[meta]\n";
  out << "schedule = " << (m.schedule == Schedule::Iml ? "iml" : "t1t2") << "\n";
  out << "inner_steps = " << m.inner_steps << "\n";
  out << "meta_updates = " << m.meta_updates << "\n";
  out << "warmup_steps = " << m.warmup_steps << "\n";
  out << "pretrain_steps = " << m.pretrain_steps << "\n";
  out << "batch_size = " << m.batch_size << "\n";
  out << "patience = "
      << (m.early_stop_patience ? std::to_string(*m.early_stop_patience) : "none") << "\n";
  out << "seed = " << m.seed << "\n";
  out << "hyper_mode = "
      << (m.hyper_mode == HyperMode::PerParameter ? "per_parameter" : "per_layer") << "\n";
  out << "hyper_init_mean = " << fmt_double(m.hyper_init_mean) << "\n";
  out << "hyper_init_stddev = " << fmt_double(m.hyper_init_stddev) << "\n";
  out << "param_init_scale = " << fmt_double(m.param_init_scale) << "\n";
  out << "hidden = " << m.hidden << "\n";
  if (const auto* n = std::get_if<NeumannSpec>(&m.approx)) {
    out << "approx = neumann\n";
    out << "approx_terms = " << n->terms << "\n";
    out << "approx_alpha = " << fmt_double(n->alpha) << "\n";
    out << "approx_scale = " << fmt_bool(n->scale_by_alpha) << "\n";
  } else if (const auto* g = std::get_if<CgSpec>(&m.approx)) {
    out << "approx = cg\n";
    out << "approx_steps = " << g->steps << "\n";
    out << "approx_damping = " << fmt_double(g->damping) << "\n";
  } else if (std::holds_alternative<IdentitySpec>(m.approx)) {
    out << "approx = identity\n";
  } else {
    out << "approx = exact\n";
    out << "approx_cap = " << std::get<ExactSpec>(m.approx).dim_cap << "\n";
  }
  if (const auto* sgd = std::get_if<SgdConfig>(&m.inner_opt)) {
    out << "inner_opt = sgd\n";
    out << "inner_lr = " << fmt_double(sgd->lr) << "\n";
    out << "momentum = " << fmt_double(sgd->momentum) << "\n";
  } else {
    const auto& adam = std::get<AdamConfig>(m.inner_opt);
    out << "inner_opt = adam\n";
    out << "inner_lr = " << fmt_double(adam.lr) << "\n";
    out << "beta1 = " << fmt_double(adam.beta1) << "\n";
    out << "beta2 = " << fmt_double(adam.beta2) << "\n";
    out << "adam_eps = " << fmt_double(adam.eps) << "\n";
  }
  out << "meta_opt = " << (m.meta_opt.kind == MetaOptKind::RmsProp ? "rmsprop" : "sgd")
      << "\n";
  out << "meta_lr = " << fmt_double(m.meta_opt.lr) << "\n";
  out << "meta_decay = " << fmt_double(m.meta_opt.decay) << "\n";
  out << "meta_eps = " << fmt_double(m.meta_opt.eps) << "\n";

  const SslConfig& s = c.ssl;
  out << "\n[ssl]\n";
  out << "tau = " << fmt_double(s.tau) << "\n";
  out << "sigma_weak = " << fmt_double(s.sigma_weak) << "\n";
  out << "sigma_strong = " << fmt_double(s.sigma_strong) << "\n";
  out << "cn_warmup_steps = " << s.cn_warmup_steps << "\n";
  out << "cn_warmup_lr = " << fmt_double(s.cn_warmup_lr) << "\n";
  out << "meta_every = " << s.meta_every << "\n";
  out << "total_steps = " << s.total_steps << "\n";
  out << "labeled_batch = " << s.labeled_batch << "\n";
  out << "unlabeled_batch = " << s.unlabeled_batch << "\n";
  out << "base_lr = " << fmt_double(s.base_lr) << "\n";
  out << "cn_meta_opt = " << (s.cn_meta_opt.kind == MetaOptKind::RmsProp ? "rmsprop" : "sgd")
      << "\n";
  out << "cn_meta_lr = " << fmt_double(s.cn_meta_opt.lr) << "\n";
  out << "cn_meta_decay = " << fmt_double(s.cn_meta_opt.decay) << "\n";
  out << "cn_meta_eps = " << fmt_double(s.cn_meta_opt.eps) << "\n";
  if (const auto* n = std::get_if<NeumannSpec>(&s.meta_approx)) {
    out << "meta_approx = neumann\n";
    out << "meta_approx_terms = " << n->terms << "\n";
    out << "meta_approx_alpha = " << fmt_double(n->alpha) << "\n";
    out << "meta_approx_scale = " << fmt_bool(n->scale_by_alpha) << "\n";
  } else if (const auto* g = std::get_if<CgSpec>(&s.meta_approx)) {
    out << "meta_approx = cg\n";
    out << "meta_approx_steps = " << g->steps << "\n";
    out << "meta_approx_damping = " << fmt_double(g->damping) << "\n";
  } else if (std::holds_alternative<IdentitySpec>(s.meta_approx)) {
    out << "meta_approx = identity\n";
  } else {
    out << "meta_approx = exact\n";
    out << "meta_approx_cap = " << std::get<ExactSpec>(s.meta_approx).dim_cap << "\n";
  }
  out << "hidden_base = " << s.hidden_base << "\n";
  out << "hidden_cn = " << s.hidden_cn << "\n";
  out << "seed = " << s.seed << "\n";
  return out.str();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  // Variant alternatives are assembled after all keys are seen.
  std::string approx_kind = "neumann";
  NeumannSpec neumann;
  CgSpec cg;
  ExactSpec exact;
  std::string inner_kind = "adam";
  SgdConfig sgd;
  AdamConfig adam;
  std::string ssl_approx_kind = "identity";
  NeumannSpec ssl_neumann;
  CgSpec ssl_cg;
  ExactSpec ssl_exact;

  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (section != "run" && section != "data" && section != "split" &&
          section != "meta" && section != "ssl") {
        throw format_error("config: unknown section [" + section + "]");
      }
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw format_error("config: line " + std::to_string(lineno) + " is not key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string where = section + "." + key;

    if (section == "run") {
      if (key == "name") c.name = value;
      else if (key == "out_dir") c.out_dir = value;
      else if (key == "seeds") c.seeds = parse_seeds(value);
      else throw format_error("config: unknown key " + where);
    } else if (section == "data") {
      if (key == "source") {
        if (value == "blobs") c.data.source = DataSource::Blobs;
        else if (value == "idx") c.data.source = DataSource::Idx;
        else throw format_error("config: unknown data source '" + value + "'");
      } else if (key == "idx_images") c.data.idx_images = value;
      else if (key == "idx_labels") c.data.idx_labels = value;
      else if (key == "blob_dim") c.data.blob_dim = parse_u64(value, where);
      else if (key == "blob_classes") c.data.blob_classes = static_cast<int>(parse_int(value, where));
      else if (key == "blob_per_class") c.data.blob_per_class = parse_u64(value, where);
      else if (key == "blob_spread") c.data.blob_spread = parse_double(value, where);
      else if (key == "blob_seed") c.data.blob_seed = parse_u64(value, where);
      else if (key == "downsample") c.data.downsample = parse_bool(value, where);
      else throw format_error("config: unknown key " + where);
    } else if (section == "split") {
      if (key == "n_train") c.data.split.n_train = parse_u64(value, where);
      else if (key == "n_val") c.data.split.n_val = parse_u64(value, where);
      else if (key == "n_test") c.data.split.n_test = parse_u64(value, where);
      else if (key == "seed") c.data.split.seed = parse_u64(value, where);
      else if (key == "stratified") c.data.split.stratified = parse_bool(value, where);
      else throw format_error("config: unknown key " + where);
    } else if (section == "meta") {
      MetaConfig& m = c.meta;
      if (key == "schedule") {
        if (value == "iml") m.schedule = Schedule::Iml;
        else if (value == "t1t2") m.schedule = Schedule::T1T2;
        else throw format_error("config: unknown schedule '" + value + "'");
      } else if (key == "inner_steps") m.inner_steps = static_cast<int>(parse_int(value, where));
      else if (key == "meta_updates") m.meta_updates = static_cast<int>(parse_int(value, where));
      else if (key == "warmup_steps") m.warmup_steps = static_cast<int>(parse_int(value, where));
      else if (key == "pretrain_steps") m.pretrain_steps = static_cast<int>(parse_int(value, where));
      else if (key == "batch_size") m.batch_size = static_cast<int>(parse_int(value, where));
      else if (key == "patience") {
        if (value == "none") m.early_stop_patience.reset();
        else m.early_stop_patience = static_cast<int>(parse_int(value, where));
      } else if (key == "seed") m.seed = parse_u64(value, where);
      else if (key == "hyper_mode") {
        if (value == "per_parameter") m.hyper_mode = HyperMode::PerParameter;
        else if (value == "per_layer") m.hyper_mode = HyperMode::PerLayer;
        else throw format_error("config: unknown hyper_mode '" + value + "'");
      } else if (key == "hyper_init_mean") m.hyper_init_mean = parse_double(value, where);
      else if (key == "hyper_init_stddev") m.hyper_init_stddev = parse_double(value, where);
      else if (key == "param_init_scale") m.param_init_scale = parse_double(value, where);
      else if (key == "hidden") m.hidden = parse_u64(value, where);
      else if (key == "approx") {
        if (value != "neumann" && value != "cg" && value != "identity" && value != "exact") {
          throw format_error("config: unknown approx '" + value + "'");
        }
        approx_kind = value;
      } else if (key == "approx_terms") neumann.terms = static_cast<int>(parse_int(value, where));
      else if (key == "approx_alpha") neumann.alpha = parse_double(value, where);
      else if (key == "approx_scale") neumann.scale_by_alpha = parse_bool(value, where);
      else if (key == "approx_steps") cg.steps = static_cast<int>(parse_int(value, where));
      else if (key == "approx_damping") cg.damping = parse_double(value, where);
      else if (key == "approx_cap") exact.dim_cap = parse_u64(value, where);
      else if (key == "inner_opt") {
        if (value != "sgd" && value != "adam") {
          throw format_error("config: unknown inner_opt '" + value + "'");
        }
        inner_kind = value;
      } else if (key == "inner_lr") { sgd.lr = adam.lr = parse_double(value, where); }
      else if (key == "momentum") sgd.momentum = parse_double(value, where);
      else if (key == "beta1") adam.beta1 = parse_double(value, where);
      else if (key == "beta2") adam.beta2 = parse_double(value, where);
      else if (key == "adam_eps") adam.eps = parse_double(value, where);
      else if (key == "meta_opt") {
        if (value == "rmsprop") m.meta_opt.kind = MetaOptKind::RmsProp;
        else if (value == "sgd") m.meta_opt.kind = MetaOptKind::Sgd;
        else throw format_error("config: unknown meta_opt '" + value + "'");
      } else if (key == "meta_lr") m.meta_opt.lr = parse_double(value, where);
      else if (key == "meta_decay") m.meta_opt.decay = parse_double(value, where);
      else if (key == "meta_eps") m.meta_opt.eps = parse_double(value, where);
      else throw format_error("config: unknown key " + where);
    } else if (section == "ssl") {
      SslConfig& s = c.ssl;
      if (key == "tau") s.tau = parse_double(value, where);
      else if (key == "sigma_weak") s.sigma_weak = parse_double(value, where);
      else if (key == "sigma_strong") s.sigma_strong = parse_double(value, where);
      else if (key == "cn_warmup_steps") s.cn_warmup_steps = static_cast<int>(parse_int(value, where));
      else if (key == "cn_warmup_lr") s.cn_warmup_lr = parse_double(value, where);
      else if (key == "meta_every") s.meta_every = static_cast<int>(parse_int(value, where));
      else if (key == "total_steps") s.total_steps = static_cast<int>(parse_int(value, where));
      else if (key == "labeled_batch") s.labeled_batch = static_cast<int>(parse_int(value, where));
      else if (key == "unlabeled_batch") s.unlabeled_batch = static_cast<int>(parse_int(value, where));
      else if (key == "base_lr") s.base_lr = parse_double(value, where);
      else if (key == "cn_meta_opt") {
        if (value == "rmsprop") s.cn_meta_opt.kind = MetaOptKind::RmsProp;
        else if (value == "sgd") s.cn_meta_opt.kind = MetaOptKind::Sgd;
        else throw format_error("config: unknown cn_meta_opt '" + value + "'");
      } else if (key == "cn_meta_lr") s.cn_meta_opt.lr = parse_double(value, where);
      else if (key == "cn_meta_decay") s.cn_meta_opt.decay = parse_double(value, where);
      else if (key == "cn_meta_eps") s.cn_meta_opt.eps = parse_double(value, where);
      else if (key == "meta_approx") {
        if (value != "neumann" && value != "cg" && value != "identity" && value != "exact") {
          throw format_error("config: unknown meta_approx '" + value + "'");
        }
        ssl_approx_kind = value;
      } else if (key == "meta_approx_terms") ssl_neumann.terms = static_cast<int>(parse_int(value, where));
      else if (key == "meta_approx_alpha") ssl_neumann.alpha = parse_double(value, where);
      else if (key == "meta_approx_scale") ssl_neumann.scale_by_alpha = parse_bool(value, where);
      else if (key == "meta_approx_steps") ssl_cg.steps = static_cast<int>(parse_int(value, where));
      else if (key == "meta_approx_damping") ssl_cg.damping = parse_double(value, where);
      else if (key == "meta_approx_cap") ssl_exact.dim_cap = parse_u64(value, where);
      else if (key == "hidden_base") s.hidden_base = parse_u64(value, where);
      else if (key == "hidden_cn") s.hidden_cn = parse_u64(value, where);
      else if (key == "seed") s.seed = parse_u64(value, where);
      else throw format_error("config: unknown key " + where);
    } else {
      throw format_error("config: key outside any section: " + key);
    }
  }

  if (approx_kind == "neumann") c.meta.approx = neumann;
  else if (approx_kind == "cg") c.meta.approx = cg;
  else if (approx_kind == "identity") c.meta.approx = IdentitySpec{};
  else c.meta.approx = exact;
  if (inner_kind == "sgd") c.meta.inner_opt = sgd;
  else c.meta.inner_opt = adam;
  if (ssl_approx_kind == "neumann") c.ssl.meta_approx = ssl_neumann;
  else if (ssl_approx_kind == "cg") c.ssl.meta_approx = ssl_cg;
  else if (ssl_approx_kind == "identity") c.ssl.meta_approx = IdentitySpec{};
  else c.ssl.meta_approx = ssl_exact;
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::string text = emit_config(config);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace iml
