#include "branchy/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "branchy/csv.hpp"

namespace branchy {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ParseError("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& v, std::size_t line, const std::string& key) {
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    fail(line, "expected integer for '" + key + "', got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& v, std::size_t line, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(line, "expected number for '" + key + "', got '" + v + "'");
  }
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> parts;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) parts.push_back(tok);
  return parts;
}

LayerSpec parse_layer(const std::string& value, std::size_t line) {
  const auto parts = split_ws(value);
  if (parts.empty()) fail(line, "empty layer description");
  const std::string& kind = parts[0];

  std::vector<std::pair<std::string, std::int64_t>> attrs;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) {
      fail(line, "layer attribute '" + parts[i] + "' is not key=value");
    }
    attrs.emplace_back(parts[i].substr(0, eq),
                       parse_int(parts[i].substr(eq + 1), line, parts[i].substr(0, eq)));
  }
  auto take = [&](const char* name, std::int64_t fallback, bool required) {
    for (auto it = attrs.begin(); it != attrs.end(); ++it) {
      if (it->first == name) {
        const std::int64_t v = it->second;
        attrs.erase(it);
        return v;
      }
    }
    if (required) fail(line, kind + " layer needs '" + std::string(name) + "'");
    return fallback;
  };
  auto done = [&] {
    if (!attrs.empty()) {
      fail(line, "unknown " + kind + " attribute '" + attrs.front().first + "'");
    }
  };

  LayerSpec spec;
  if (kind == "conv") {
    ConvSpec c;
    c.channels = take("channels", 0, true);
    c.kernel = take("kernel", 0, true);
    c.stride = take("stride", 1, false);
    c.pad = take("pad", 0, false);
    done();
    spec = c;
  } else if (kind == "dense") {
    DenseSpec d;
    d.features = take("features", 0, true);
    done();
    spec = d;
  } else if (kind == "relu") {
    done();
    spec = ReluSpec{};
  } else if (kind == "maxpool") {
    MaxPoolSpec p;
    p.window = take("window", 0, true);
    p.stride = take("stride", p.window, false);
    done();
    spec = p;
  } else if (kind == "flatten") {
    done();
    spec = FlattenSpec{};
  } else {
    fail(line, "unknown layer kind '" + kind + "'");
  }
  try {
    validate_layer(spec);
  } catch (const Error& e) {
    fail(line, e.what());
  }
  return spec;
}

std::string serialize_layer(const LayerSpec& spec) {
  std::string s = "layer = ";
  if (const auto* c = std::get_if<ConvSpec>(&spec)) {
    s += "conv channels=" + std::to_string(c->channels) + " kernel=" +
         std::to_string(c->kernel) + " stride=" + std::to_string(c->stride) + " pad=" +
         std::to_string(c->pad);
  } else if (const auto* d = std::get_if<DenseSpec>(&spec)) {
    s += "dense features=" + std::to_string(d->features);
  } else if (std::holds_alternative<ReluSpec>(spec)) {
    s += "relu";
  } else if (const auto* p = std::get_if<MaxPoolSpec>(&spec)) {
    s += "maxpool window=" + std::to_string(p->window) + " stride=" + std::to_string(p->stride);
  } else {
    s += "flatten";
  }
  return s;
}

}  // namespace

FullConfig parse_config(const std::string& text) {
  FullConfig config;
  NetworkSpec& net = config.net;
  TrainConfig& train = config.train;

  enum class Section { None, Net, Trunk, Branch, Train };
  Section section = Section::None;
  BranchSpec* branch = nullptr;
  bool branch_has_attach = false;
  std::size_t branch_line = 0;

  // Line number of every layer, for shape-chain diagnostics after parsing.
  std::vector<std::size_t> trunk_lines;
  std::vector<std::vector<std::size_t>> branch_lines;

  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  auto finish_branch = [&] {
    if (branch && !branch_has_attach) {
      fail(branch_line, "branch section is missing 'attach_after'");
    }
    branch = nullptr;
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      finish_branch();
      if (name == "net") {
        section = Section::Net;
      } else if (name == "trunk") {
        section = Section::Trunk;
      } else if (name == "branch") {
        if (net.trunk.empty()) fail(line_no, "[branch] must come after [trunk]");
        section = Section::Branch;
        net.branches.emplace_back();
        branch = &net.branches.back();
        branch->exit_index = static_cast<std::int64_t>(net.branches.size());
        branch_has_attach = false;
        branch_line = line_no;
        branch_lines.emplace_back();
      } else if (name == "train") {
        section = Section::Train;
      } else {
        fail(line_no, "unknown section [" + name + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "missing key before '='");

    switch (section) {
      case Section::None:
        fail(line_no, "'" + key + "' appears before any section header");
      case Section::Net:
        if (key == "input_channels") {
          net.in_channels = parse_int(value, line_no, key);
        } else if (key == "input_height") {
          net.in_height = parse_int(value, line_no, key);
        } else if (key == "input_width") {
          net.in_width = parse_int(value, line_no, key);
        } else if (key == "num_classes") {
          net.num_classes = parse_int(value, line_no, key);
        } else {
          fail(line_no, "unknown [net] key '" + key + "'");
        }
        break;
      case Section::Trunk:
        if (key != "layer") fail(line_no, "unknown [trunk] key '" + key + "'");
        net.trunk.push_back(parse_layer(value, line_no));
        trunk_lines.push_back(line_no);
        break;
      case Section::Branch:
        if (key == "attach_after") {
          branch->attach_after = parse_int(value, line_no, key);
          branch_has_attach = true;
        } else if (key == "layer") {
          branch->layers.push_back(parse_layer(value, line_no));
          branch_lines.back().push_back(line_no);
        } else {
          fail(line_no, "unknown [branch] key '" + key + "'");
        }
        break;
      case Section::Train:
        if (key == "epochs") {
          train.epochs = parse_int(value, line_no, key);
        } else if (key == "batch_size") {
          train.batch_size = parse_int(value, line_no, key);
        } else if (key == "alpha") {
          train.adam.alpha = parse_real(value, line_no, key);
        } else if (key == "beta1") {
          train.adam.beta1 = parse_real(value, line_no, key);
        } else if (key == "beta2") {
          train.adam.beta2 = parse_real(value, line_no, key);
        } else if (key == "epsilon") {
          train.adam.epsilon = parse_real(value, line_no, key);
        } else if (key == "seed") {
          train.seed = static_cast<std::uint64_t>(parse_int(value, line_no, key));
        } else if (key == "exit_weights") {
          train.exit_weights.w.clear();
          std::string item;
          std::istringstream items(value);
          while (std::getline(items, item, ',')) {
            item = trim(item);
            if (item.empty()) fail(line_no, "empty entry in exit_weights");
            train.exit_weights.w.push_back(parse_real(item, line_no, key));
          }
          if (train.exit_weights.w.empty()) fail(line_no, "exit_weights is empty");
        } else {
          fail(line_no, "unknown [train] key '" + key + "'");
        }
        break;
    }
  }
  finish_branch();

  if (net.trunk.empty()) throw ParseError("config: no trunk defined");
  if (net.in_channels < 1 || net.in_height < 1 || net.in_width < 1 || net.num_classes < 2) {
    throw ParseError(
        "config: [net] must define input_channels, input_height, input_width and num_classes");
  }

  // Structural checks with the layer's own line in the message.
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    const BranchSpec& br = net.branches[b];
    if (br.attach_after < 0 ||
        br.attach_after >= static_cast<std::int64_t>(net.trunk.size()) - 1) {
      throw ParseError("config: branch " + std::to_string(b + 1) + " attach_after " +
                       std::to_string(br.attach_after) + " must name a trunk layer before the head (0.." +
                       std::to_string(net.trunk.size() - 2) + ")");
    }
  }

  // Shape chain via symbolic forward, reporting the offending line.
  Shape cur = net.input_shape();
  std::vector<Shape> trunk_shapes;
  for (std::size_t i = 0; i < net.trunk.size(); ++i) {
    try {
      cur = infer_layer_shape(net.trunk[i], cur);
    } catch (const Error& e) {
      fail(trunk_lines[i], e.what());
    }
    trunk_shapes.push_back(cur);
  }
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    Shape bcur = trunk_shapes[static_cast<std::size_t>(net.branches[b].attach_after)];
    for (std::size_t j = 0; j < net.branches[b].layers.size(); ++j) {
      try {
        bcur = infer_layer_shape(net.branches[b].layers[j], bcur);
      } catch (const Error& e) {
        fail(branch_lines[b][j], e.what());
      }
    }
  }

  validate_network(net);
  if (!train.exit_weights.w.empty()) {
    validate_exit_weights(net, train.exit_weights);
  }
  validate_train_config(train);
  return config;
}

FullConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_network(const NetworkSpec& net) {
  std::string out;
  out += "[net]\n";
  out += "input_channels = " + std::to_string(net.in_channels) + "\n";
  out += "input_height = " + std::to_string(net.in_height) + "\n";
  out += "input_width = " + std::to_string(net.in_width) + "\n";
  out += "num_classes = " + std::to_string(net.num_classes) + "\n";
  out += "\n[trunk]\n";
  for (const LayerSpec& layer : net.trunk) out += serialize_layer(layer) + "\n";
  for (const BranchSpec& br : net.branches) {
    out += "\n[branch]\n";
    out += "attach_after = " + std::to_string(br.attach_after) + "\n";
    for (const LayerSpec& layer : br.layers) out += serialize_layer(layer) + "\n";
  }
  return out;
}

std::string serialize_config(const FullConfig& config) {
  std::string out = serialize_network(config.net);
  out += "\n[train]\n";
  out += "epochs = " + std::to_string(config.train.epochs) + "\n";
  out += "batch_size = " + std::to_string(config.train.batch_size) + "\n";
  out += "alpha = " + format_number(config.train.adam.alpha) + "\n";
  out += "beta1 = " + format_number(config.train.adam.beta1) + "\n";
  out += "beta2 = " + format_number(config.train.adam.beta2) + "\n";
  out += "epsilon = " + format_number(config.train.adam.epsilon) + "\n";
  out += "seed = " + std::to_string(config.train.seed) + "\n";
  if (!config.train.exit_weights.w.empty()) {
    out += "exit_weights = ";
    for (std::size_t i = 0; i < config.train.exit_weights.w.size(); ++i) {
      if (i) out += ", ";
      out += format_number(config.train.exit_weights.w[i]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace branchy
