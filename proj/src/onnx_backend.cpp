#include "camsticker/onnx_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace camsticker {

namespace {

// ---------------------------------------------------------------------------
// Minimal protobuf wire-format reader (varint + length-delimited + fixed32),
// enough to walk the ONNX ModelProto fields used below.

struct Reader {
  const unsigned char* p;
  const unsigned char* end;

  bool done() const { return p >= end; }

  std::uint64_t varint() {
    std::uint64_t v = 0;
    int shift = 0;
    while (p < end) {
      unsigned char b = *p++;
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
      shift += 7;
      if (shift >= 64) break;
    }
    throw std::runtime_error("onnx: truncated varint");
  }

  bool next(std::uint32_t& field, std::uint32_t& wire) {
    if (done()) return false;
    std::uint64_t key = varint();
    field = static_cast<std::uint32_t>(key >> 3);
    wire = static_cast<std::uint32_t>(key & 7);
    return true;
  }

  Reader bytes() {
    std::uint64_t len = varint();
    if (p + len > end) throw std::runtime_error("onnx: truncated field");
    Reader r{p, p + len};
    p += len;
    return r;
  }

  std::string str() {
    Reader r = bytes();
    return std::string(reinterpret_cast<const char*>(r.p), r.end - r.p);
  }

  float fixed32() {
    if (p + 4 > end) throw std::runtime_error("onnx: truncated fixed32");
    float f;
    std::memcpy(&f, p, 4);
    p += 4;
    return f;
  }

  std::uint64_t fixed64() {
    if (p + 8 > end) throw std::runtime_error("onnx: truncated fixed64");
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    p += 8;
    return v;
  }

  void skip(std::uint32_t wire) {
    switch (wire) {
      case 0: varint(); break;
      case 1: fixed64(); break;
      case 2: bytes(); break;
      case 5: fixed32(); break;
      default: throw std::runtime_error("onnx: unsupported wire type");
    }
  }
};

struct TensorF {
  std::vector<std::int64_t> dims;
  std::vector<float> data;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (std::int64_t d : dims) n *= d;
    return n;
  }
};

struct Attr {
  float f = 0.0f;
  std::int64_t i = 0;
  std::vector<std::int64_t> ints;
  TensorF t;
  std::string s;
};

struct Node {
  std::string op;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, Attr> attrs;
};

// TensorProto: dims=1, data_type=2, float_data=4, int64_data=7, name=8,
// raw_data=9.
TensorF parse_tensor(Reader r, std::string* name = nullptr) {
  TensorF t;
  std::int32_t dtype = 1;  // FLOAT
  std::uint32_t field, wire;
  while (r.next(field, wire)) {
    switch (field) {
      case 1:
        if (wire == 2) {
          Reader packed = r.bytes();
          while (!packed.done()) {
            t.dims.push_back(static_cast<std::int64_t>(packed.varint()));
          }
        } else {
          t.dims.push_back(static_cast<std::int64_t>(r.varint()));
        }
        break;
      case 2:
        dtype = static_cast<std::int32_t>(r.varint());
        break;
      case 4:
        if (wire == 2) {
          Reader packed = r.bytes();
          while (!packed.done()) t.data.push_back(packed.fixed32());
        } else {
          t.data.push_back(r.fixed32());
        }
        break;
      case 7:
        if (wire == 2) {
          Reader packed = r.bytes();
          while (!packed.done()) {
            t.data.push_back(static_cast<float>(
                static_cast<std::int64_t>(packed.varint())));
          }
        } else {
          t.data.push_back(
              static_cast<float>(static_cast<std::int64_t>(r.varint())));
        }
        break;
      case 8:
        if (name) *name = r.str();
        else r.skip(wire);
        break;
      case 9: {
        Reader raw = r.bytes();
        std::size_t nbytes = raw.end - raw.p;
        if (dtype == 1) {  // float32
          t.data.resize(nbytes / 4);
          std::memcpy(t.data.data(), raw.p, t.data.size() * 4);
        } else if (dtype == 7) {  // int64
          std::size_t n = nbytes / 8;
          t.data.resize(n);
          for (std::size_t k = 0; k < n; ++k) {
            std::int64_t v;
            std::memcpy(&v, raw.p + 8 * k, 8);
            t.data[k] = static_cast<float>(v);
          }
        } else {
          throw std::runtime_error(
              "onnx: unsupported tensor data type " + std::to_string(dtype));
        }
        break;
      }
      default:
        r.skip(wire);
    }
  }
  return t;
}

// AttributeProto: name=1, f=2, i=3, s=4, t=5, floats=7, ints=8.
std::pair<std::string, Attr> parse_attr(Reader r) {
  std::string name;
  Attr a;
  std::uint32_t field, wire;
  while (r.next(field, wire)) {
    switch (field) {
      case 1: name = r.str(); break;
      case 2: a.f = r.fixed32(); break;
      case 3: a.i = static_cast<std::int64_t>(r.varint()); break;
      case 4: a.s = r.str(); break;
      case 5: a.t = parse_tensor(r.bytes()); break;
      case 8:
        if (wire == 2) {
          Reader packed = r.bytes();
          while (!packed.done()) {
            a.ints.push_back(static_cast<std::int64_t>(packed.varint()));
          }
        } else {
          a.ints.push_back(static_cast<std::int64_t>(r.varint()));
        }
        break;
      default:
        r.skip(wire);
    }
  }
  return {name, a};
}

// NodeProto: input=1, output=2, op_type=4, attribute=5.
Node parse_node(Reader r) {
  Node n;
  std::uint32_t field, wire;
  while (r.next(field, wire)) {
    switch (field) {
      case 1: n.inputs.push_back(r.str()); break;
      case 2: n.outputs.push_back(r.str()); break;
      case 4: n.op = r.str(); break;
      case 5: n.attrs.insert(parse_attr(r.bytes())); break;
      default: r.skip(wire);
    }
  }
  return n;
}

// ValueInfoProto -> (name, dims). TypeProto.tensor_type=1; Tensor.shape=2;
// TensorShapeProto.dim=1; Dimension.dim_value=1.
std::pair<std::string, std::vector<std::int64_t>> parse_value_info(Reader r) {
  std::string name;
  std::vector<std::int64_t> dims;
  std::uint32_t field, wire;
  while (r.next(field, wire)) {
    if (field == 1) {
      name = r.str();
    } else if (field == 2) {
      Reader type = r.bytes();
      std::uint32_t f2, w2;
      while (type.next(f2, w2)) {
        if (f2 == 1) {
          Reader tt = type.bytes();
          std::uint32_t f3, w3;
          while (tt.next(f3, w3)) {
            if (f3 == 2) {
              Reader shape = tt.bytes();
              std::uint32_t f4, w4;
              while (shape.next(f4, w4)) {
                if (f4 == 1) {
                  Reader dim = shape.bytes();
                  std::uint32_t f5, w5;
                  std::int64_t val = -1;
                  while (dim.next(f5, w5)) {
                    if (f5 == 1) {
                      val = static_cast<std::int64_t>(dim.varint());
                    } else {
                      dim.skip(w5);
                    }
                  }
                  dims.push_back(val);
                } else {
                  shape.skip(w4);
                }
              }
            } else {
              tt.skip(w3);
            }
          }
        } else {
          type.skip(w2);
        }
      }
    } else {
      r.skip(wire);
    }
  }
  return {name, dims};
}

}  // namespace

// GraphProto: node=1, initializer=5, input=11, output=12.
struct OnnxBackend::Model {
  std::vector<Node> nodes;
  std::map<std::string, TensorF> initializers;
  std::string input_name;
  std::string output_name;
  std::vector<std::int64_t> input_dims;

  static Model parse(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    Reader top{buf.data(), buf.data() + buf.size()};

    Model m;
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> graph_inputs;
    std::uint32_t field, wire;
    bool saw_graph = false;
    while (top.next(field, wire)) {
      if (field == 7 && wire == 2) {  // ModelProto.graph
        saw_graph = true;
        Reader g = top.bytes();
        std::uint32_t gf, gw;
        while (g.next(gf, gw)) {
          switch (gf) {
            case 1: m.nodes.push_back(parse_node(g.bytes())); break;
            case 5: {
              std::string name;
              TensorF t = parse_tensor(g.bytes(), &name);
              m.initializers.emplace(std::move(name), std::move(t));
              break;
            }
            case 11: graph_inputs.push_back(parse_value_info(g.bytes())); break;
            case 12: {
              auto [name, dims] = parse_value_info(g.bytes());
              if (m.output_name.empty()) m.output_name = name;
              break;
            }
            default: g.skip(gw);
          }
        }
      } else {
        top.skip(wire);
      }
    }
    if (!saw_graph || m.nodes.empty()) {
      throw std::runtime_error("onnx: no graph found in " + path +
                               " (is this an ONNX model file?)");
    }
    for (auto& [name, dims] : graph_inputs) {
      if (!m.initializers.count(name)) {
        m.input_name = name;
        m.input_dims = dims;
        break;
      }
    }
    if (m.input_name.empty()) {
      throw std::runtime_error("onnx: could not identify the graph input");
    }
    return m;
  }

  TensorF run(TensorF input) const;
};

namespace {

std::int64_t attr_i(const Node& n, const char* name, std::int64_t dflt) {
  auto it = n.attrs.find(name);
  return it == n.attrs.end() ? dflt : it->second.i;
}

float attr_f(const Node& n, const char* name, float dflt) {
  auto it = n.attrs.find(name);
  return it == n.attrs.end() ? dflt : it->second.f;
}

std::vector<std::int64_t> attr_ints(const Node& n, const char* name,
                                    std::vector<std::int64_t> dflt) {
  auto it = n.attrs.find(name);
  return it == n.attrs.end() ? dflt : it->second.ints;
}

TensorF op_conv(const Node& n, const TensorF& x, const TensorF& w,
                const TensorF* bias) {
  if (attr_i(n, "group", 1) != 1) {
    throw std::runtime_error("onnx: grouped Conv is not supported");
  }
  auto strides = attr_ints(n, "strides", {1, 1});
  auto pads = attr_ints(n, "pads", {0, 0, 0, 0});
  auto dil = attr_ints(n, "dilations", {1, 1});
  const std::int64_t N = x.dims[0], C = x.dims[1], H = x.dims[2], W = x.dims[3];
  const std::int64_t OC = w.dims[0], KH = w.dims[2], KW = w.dims[3];
  const std::int64_t OH =
      (H + pads[0] + pads[2] - dil[0] * (KH - 1) - 1) / strides[0] + 1;
  const std::int64_t OW =
      (W + pads[1] + pads[3] - dil[1] * (KW - 1) - 1) / strides[1] + 1;

  TensorF y;
  y.dims = {N, OC, OH, OW};
  y.data.assign(static_cast<std::size_t>(N * OC * OH * OW), 0.0f);

  for (std::int64_t b = 0; b < N; ++b) {
#pragma omp parallel for schedule(static)
    for (std::int64_t oc = 0; oc < OC; ++oc) {
      for (std::int64_t oi = 0; oi < OH; ++oi) {
        for (std::int64_t oj = 0; oj < OW; ++oj) {
          float s = bias ? bias->data[oc] : 0.0f;
          for (std::int64_t ic = 0; ic < C; ++ic) {
            for (std::int64_t u = 0; u < KH; ++u) {
              std::int64_t ii = oi * strides[0] + u * dil[0] - pads[0];
              if (ii < 0 || ii >= H) continue;
              for (std::int64_t v = 0; v < KW; ++v) {
                std::int64_t jj = oj * strides[1] + v * dil[1] - pads[1];
                if (jj < 0 || jj >= W) continue;
                s += x.data[((b * C + ic) * H + ii) * W + jj] *
                     w.data[((oc * C + ic) * KH + u) * KW + v];
              }
            }
          }
          y.data[((b * OC + oc) * OH + oi) * OW + oj] = s;
        }
      }
    }
  }
  return y;
}

TensorF op_pool(const Node& n, const TensorF& x, bool is_max) {
  auto kernel = attr_ints(n, "kernel_shape", {1, 1});
  auto strides = attr_ints(n, "strides", kernel);
  auto pads = attr_ints(n, "pads", {0, 0, 0, 0});
  const bool ceil_mode = attr_i(n, "ceil_mode", 0) != 0;
  const std::int64_t N = x.dims[0], C = x.dims[1], H = x.dims[2], W = x.dims[3];
  auto out_dim = [&](std::int64_t in, std::int64_t k, std::int64_t s,
                     std::int64_t p0, std::int64_t p1) {
    double v = static_cast<double>(in + p0 + p1 - k) / s + 1;
    return static_cast<std::int64_t>(ceil_mode ? std::ceil(v) : std::floor(v));
  };
  const std::int64_t OH = out_dim(H, kernel[0], strides[0], pads[0], pads[2]);
  const std::int64_t OW = out_dim(W, kernel[1], strides[1], pads[1], pads[3]);

  TensorF y;
  y.dims = {N, C, OH, OW};
  y.data.assign(static_cast<std::size_t>(N * C * OH * OW), 0.0f);
  for (std::int64_t b = 0; b < N; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t oi = 0; oi < OH; ++oi) {
        for (std::int64_t oj = 0; oj < OW; ++oj) {
          float best = is_max ? -3.4e38f : 0.0f;
          int count = 0;
          for (std::int64_t u = 0; u < kernel[0]; ++u) {
            std::int64_t ii = oi * strides[0] + u - pads[0];
            if (ii < 0 || ii >= H) continue;
            for (std::int64_t v = 0; v < kernel[1]; ++v) {
              std::int64_t jj = oj * strides[1] + v - pads[1];
              if (jj < 0 || jj >= W) continue;
              float val = x.data[((b * C + c) * H + ii) * W + jj];
              if (is_max) {
                best = std::max(best, val);
              } else {
                best += val;
              }
              ++count;
            }
          }
          y.data[((b * C + c) * OH + oi) * OW + oj] =
              is_max ? best : (count > 0 ? best / count : 0.0f);
        }
      }
    }
  }
  return y;
}

}  // namespace

TensorF OnnxBackend::Model::run(TensorF input) const {
  std::map<std::string, TensorF> vals;
  vals.emplace(input_name, std::move(input));

  auto get = [&](const std::string& name) -> const TensorF& {
    auto it = vals.find(name);
    if (it != vals.end()) return it->second;
    auto init = initializers.find(name);
    if (init != initializers.end()) return init->second;
    throw std::runtime_error("onnx: tensor '" + name + "' is not available");
  };

  for (const Node& n : nodes) {
    TensorF out;
    if (n.op == "Conv") {
      const TensorF* bias = n.inputs.size() > 2 ? &get(n.inputs[2]) : nullptr;
      out = op_conv(n, get(n.inputs[0]), get(n.inputs[1]), bias);
    } else if (n.op == "Relu") {
      out = get(n.inputs[0]);
      for (float& v : out.data) v = std::max(v, 0.0f);
    } else if (n.op == "MaxPool") {
      out = op_pool(n, get(n.inputs[0]), /*is_max=*/true);
    } else if (n.op == "AveragePool") {
      out = op_pool(n, get(n.inputs[0]), /*is_max=*/false);
    } else if (n.op == "GlobalAveragePool") {
      const TensorF& x = get(n.inputs[0]);
      const std::int64_t N = x.dims[0], C = x.dims[1];
      const std::int64_t A = x.numel() / (N * C);
      out.dims = {N, C, 1, 1};
      out.data.assign(static_cast<std::size_t>(N * C), 0.0f);
      for (std::int64_t b = 0; b < N; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
          double s = 0.0;
          for (std::int64_t k = 0; k < A; ++k) {
            s += x.data[(b * C + c) * A + k];
          }
          out.data[b * C + c] = static_cast<float>(s / A);
        }
      }
    } else if (n.op == "BatchNormalization") {
      const TensorF& x = get(n.inputs[0]);
      const TensorF& scale = get(n.inputs[1]);
      const TensorF& shift = get(n.inputs[2]);
      const TensorF& mean = get(n.inputs[3]);
      const TensorF& var = get(n.inputs[4]);
      const float eps = attr_f(n, "epsilon", 1e-5f);
      out = x;
      const std::int64_t N = x.dims[0], C = x.dims[1];
      const std::int64_t A = x.numel() / (N * C);
      for (std::int64_t b = 0; b < N; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
          const float k = scale.data[c] / std::sqrt(var.data[c] + eps);
          const float o = shift.data[c] - mean.data[c] * k;
          float* p = out.data.data() + (b * C + c) * A;
          for (std::int64_t q = 0; q < A; ++q) p[q] = p[q] * k + o;
        }
      }
    } else if (n.op == "Add") {
      const TensorF& a = get(n.inputs[0]);
      const TensorF& b = get(n.inputs[1]);
      if (a.numel() != b.numel()) {
        throw std::runtime_error("onnx: Add requires same-size operands");
      }
      out = a;
      for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += b.data[k];
    } else if (n.op == "Flatten") {
      const TensorF& x = get(n.inputs[0]);
      std::int64_t axis = attr_i(n, "axis", 1);
      std::int64_t outer = 1;
      for (std::int64_t k = 0; k < axis; ++k) outer *= x.dims[k];
      out = x;
      out.dims = {outer, x.numel() / outer};
    } else if (n.op == "Reshape") {
      const TensorF& x = get(n.inputs[0]);
      const TensorF& shape = get(n.inputs[1]);
      std::vector<std::int64_t> dims;
      std::int64_t known = 1;
      int infer = -1;
      for (std::size_t k = 0; k < shape.data.size(); ++k) {
        std::int64_t d = static_cast<std::int64_t>(shape.data[k]);
        if (d == 0) d = x.dims[k];
        if (d == -1) {
          infer = static_cast<int>(k);
          dims.push_back(-1);
          continue;
        }
        known *= d;
        dims.push_back(d);
      }
      if (infer >= 0) dims[infer] = x.numel() / known;
      out = x;
      out.dims = dims;
    } else if (n.op == "Gemm") {
      const TensorF& a = get(n.inputs[0]);
      const TensorF& b = get(n.inputs[1]);
      const bool trans_a = attr_i(n, "transA", 0) != 0;
      const bool trans_b = attr_i(n, "transB", 0) != 0;
      const float alpha = attr_f(n, "alpha", 1.0f);
      const float beta = attr_f(n, "beta", 1.0f);
      const std::int64_t M = trans_a ? a.dims[1] : a.dims[0];
      const std::int64_t K = trans_a ? a.dims[0] : a.dims[1];
      const std::int64_t N2 = trans_b ? b.dims[0] : b.dims[1];
      out.dims = {M, N2};
      out.data.assign(static_cast<std::size_t>(M * N2), 0.0f);
      for (std::int64_t i = 0; i < M; ++i) {
        for (std::int64_t j = 0; j < N2; ++j) {
          double s = 0.0;
          for (std::int64_t k = 0; k < K; ++k) {
            float av = trans_a ? a.data[k * M + i] : a.data[i * K + k];
            float bv = trans_b ? b.data[j * K + k] : b.data[k * N2 + j];
            s += static_cast<double>(av) * bv;
          }
          out.data[i * N2 + j] = alpha * static_cast<float>(s);
        }
      }
      if (n.inputs.size() > 2 && beta != 0.0f) {
        const TensorF& c = get(n.inputs[2]);
        for (std::int64_t i = 0; i < M; ++i) {
          for (std::int64_t j = 0; j < N2; ++j) {
            out.data[i * N2 + j] +=
                beta * c.data[c.numel() == N2 ? j : i * N2 + j];
          }
        }
      }
    } else if (n.op == "MatMul") {
      const TensorF& a = get(n.inputs[0]);
      const TensorF& b = get(n.inputs[1]);
      const std::int64_t M = a.dims[0], K = a.dims[1], N2 = b.dims[1];
      out.dims = {M, N2};
      out.data.assign(static_cast<std::size_t>(M * N2), 0.0f);
      for (std::int64_t i = 0; i < M; ++i) {
        for (std::int64_t j = 0; j < N2; ++j) {
          double s = 0.0;
          for (std::int64_t k = 0; k < K; ++k) {
            s += static_cast<double>(a.data[i * K + k]) * b.data[k * N2 + j];
          }
          out.data[i * N2 + j] = static_cast<float>(s);
        }
      }
    } else if (n.op == "Constant") {
      auto it = n.attrs.find("value");
      if (it == n.attrs.end()) {
        throw std::runtime_error("onnx: Constant without a tensor value");
      }
      out = it->second.t;
    } else if (n.op == "Identity" || n.op == "Dropout") {
      out = get(n.inputs[0]);
    } else if (n.op == "Softmax") {
      out = get(n.inputs[0]);
      const std::int64_t N = out.dims[0];
      const std::int64_t C = out.numel() / N;
      for (std::int64_t b = 0; b < N; ++b) {
        float* p = out.data.data() + b * C;
        float mx = *std::max_element(p, p + C);
        double sum = 0.0;
        for (std::int64_t k = 0; k < C; ++k) sum += std::exp(p[k] - mx);
        for (std::int64_t k = 0; k < C; ++k) {
          p[k] = static_cast<float>(std::exp(p[k] - mx) / sum);
        }
      }
    } else {
      throw std::runtime_error("onnx: unsupported operator '" + n.op + "'");
    }
    vals[n.outputs[0]] = std::move(out);
    // Extra outputs (e.g. Dropout mask) are never consumed by this op set.
  }

  auto it = vals.find(output_name);
  if (it == vals.end()) {
    throw std::runtime_error("onnx: graph output '" + output_name +
                             "' was never produced");
  }
  return std::move(it->second);
}

namespace {

// Bilinear shorter-side resize, align-corners=false sampling.
Image resize_shorter_side(const Image& img, int target) {
  const int h = img.height, w = img.width;
  if (std::min(h, w) == target) return img;
  double scale = static_cast<double>(target) / std::min(h, w);
  int nh = static_cast<int>(std::lround(h * scale));
  int nw = static_cast<int>(std::lround(w * scale));
  if (h <= w) nh = target; else nw = target;

  Image out(nh, nw);
  for (int i = 0; i < nh; ++i) {
    double si = (i + 0.5) * h / nh - 0.5;
    int i0 = static_cast<int>(std::floor(si));
    double fi = si - i0;
    int ia = std::clamp(i0, 0, h - 1), ib = std::clamp(i0 + 1, 0, h - 1);
    for (int j = 0; j < nw; ++j) {
      double sj = (j + 0.5) * w / nw - 0.5;
      int j0 = static_cast<int>(std::floor(sj));
      double fj = sj - j0;
      int ja = std::clamp(j0, 0, w - 1), jb = std::clamp(j0 + 1, 0, w - 1);
      for (int c = 0; c < 3; ++c) {
        double top = img.at(ia, ja, c) * (1 - fj) + img.at(ia, jb, c) * fj;
        double bot = img.at(ib, ja, c) * (1 - fj) + img.at(ib, jb, c) * fj;
        out.at(i, j, c) = top * (1 - fi) + bot * fi;
      }
    }
  }
  return out;
}

Image center_crop(const Image& img, int ch, int cw) {
  if (img.height == ch && img.width == cw) return img;
  if (img.height < ch || img.width < cw) {
    throw std::runtime_error("preprocess: image smaller than the crop");
  }
  int oi = (img.height - ch) / 2;
  int oj = (img.width - cw) / 2;
  Image out(ch, cw);
  for (int i = 0; i < ch; ++i) {
    for (int j = 0; j < cw; ++j) {
      for (int c = 0; c < 3; ++c) out.at(i, j, c) = img.at(oi + i, oj + j, c);
    }
  }
  return out;
}

}  // namespace

PreprocSpec load_preproc_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open preprocessing sidecar: " + path);
  nlohmann::json j;
  in >> j;
  PreprocSpec p;
  p.resize_shorter = j.value("resize_shorter", 0);
  if (j.contains("crop")) {
    p.crop_h = j.at("crop").at(0);
    p.crop_w = j.at("crop").at(1);
  }
  if (j.contains("mean")) {
    for (int c = 0; c < 3; ++c) p.mean[c] = j.at("mean").at(c);
  }
  if (j.contains("std")) {
    for (int c = 0; c < 3; ++c) p.stdev[c] = j.at("std").at(c);
  }
  return p;
}

OnnxBackend::OnnxBackend(const std::string& model_path,
                         const PreprocSpec& preproc, int max_batch)
    : model_(std::make_shared<Model>(Model::parse(model_path))),
      preproc_(preproc),
      max_batch_(max_batch) {
  // Size the logit vector by running a zero input once.
  int h = preproc_.crop_h, w = preproc_.crop_w;
  if (h == 0 || w == 0) {
    if (model_->input_dims.size() == 4 && model_->input_dims[2] > 0 &&
        model_->input_dims[3] > 0) {
      h = static_cast<int>(model_->input_dims[2]);
      w = static_cast<int>(model_->input_dims[3]);
    } else {
      throw std::runtime_error(
          "onnx: model input size is dynamic; declare a crop in the "
          "preprocessing sidecar");
    }
  }
  TensorF zero;
  zero.dims = {1, 3, h, w};
  zero.data.assign(static_cast<std::size_t>(3) * h * w, 0.0f);
  TensorF out = model_->run(std::move(zero));
  num_classes_ = static_cast<int>(out.numel() / out.dims[0]);
}

OnnxBackend::~OnnxBackend() = default;

int OnnxBackend::num_classes() const { return num_classes_; }

std::vector<Logits> OnnxBackend::forward(
    const std::vector<Image>& images) const {
  std::vector<Logits> out(images.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t m = 0; m < images.size(); ++m) {
    try {
      Image img = images[m];
      if (preproc_.resize_shorter > 0) {
        img = resize_shorter_side(img, preproc_.resize_shorter);
      }
      if (preproc_.crop_h > 0 && preproc_.crop_w > 0) {
        img = center_crop(img, preproc_.crop_h, preproc_.crop_w);
      }
      TensorF x;
      x.dims = {1, 3, img.height, img.width};
      x.data.resize(static_cast<std::size_t>(3) * img.height * img.width);
      for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < img.height; ++i) {
          for (int j = 0; j < img.width; ++j) {
            x.data[(static_cast<std::size_t>(c) * img.height + i) * img.width +
                   j] =
                static_cast<float>((img.at(i, j, c) - preproc_.mean[c]) /
                                   preproc_.stdev[c]);
          }
        }
      }
      TensorF z = model_->run(std::move(x));
      if (static_cast<int>(z.numel() / z.dims[0]) != num_classes_) {
        throw std::runtime_error("onnx: output size changed between runs");
      }
      Logits logits(num_classes_);
      for (int k = 0; k < num_classes_; ++k) {
        double v = z.data[k];
        if (!std::isfinite(v)) {
          throw std::runtime_error("onnx: non-finite logit produced");
        }
        logits[k] = v;
      }
      out[m] = std::move(logits);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace camsticker
