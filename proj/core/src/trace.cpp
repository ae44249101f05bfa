#include "sgt/trace.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace sgt {

std::uint16_t fp32_to_fp16(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::int32_t exp = static_cast<std::int32_t>((x >> 23) & 0xffu);
  std::uint32_t man = x & 0x7fffffu;
  if (exp == 255) return static_cast<std::uint16_t>(sign | 0x7c00u | (man ? 0x200u : 0));
  const std::int32_t he = exp - 127 + 15;
  if (he >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);  // overflow -> inf
  if (he <= 0) {
    if (he < -10) return static_cast<std::uint16_t>(sign);  // underflow -> signed zero
    man |= 0x800000u;
    const int shift = 14 - he;
    std::uint32_t h = man >> shift;
    const std::uint32_t rem = man & ((1u << shift) - 1);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (h & 1u))) ++h;
    return static_cast<std::uint16_t>(sign | h);
  }
  std::uint16_t h = static_cast<std::uint16_t>(sign | (static_cast<std::uint32_t>(he) << 10) |
                                               (man >> 13));
  const std::uint32_t rem = man & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;  // carry rolls into the exponent
  return h;
}

float fp16_to_fp32(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t man = h & 0x3ffu;
  if (exp == 31) return std::bit_cast<float>(sign | 0x7f800000u | (man << 13));
  if (exp == 0) {
    if (man == 0) return std::bit_cast<float>(sign);
    int e = -1;
    do {
      man <<= 1;
      ++e;
    } while (!(man & 0x400u));
    return std::bit_cast<float>(sign | static_cast<std::uint32_t>(127 - 15 - e) << 23 |
                                ((man & 0x3ffu) << 13));
  }
  return std::bit_cast<float>(sign | ((exp + 127 - 15) << 23) | (man << 13));
}

namespace {

constexpr char kMagic[4] = {'S', 'G', 'T', 'R'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  const std::uint8_t* data;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > len)
      throw IntegrityError("trace: truncated " + std::string(what) + " at byte offset " +
                           std::to_string(pos));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};

std::vector<std::uint8_t> pack_floats(const std::vector<float>& v, bool half) {
  std::vector<std::uint8_t> out;
  out.reserve(v.size() * (half ? 2 : 4));
  for (float f : v) {
    if (half) {
      put_u16(out, fp32_to_fp16(f));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

std::vector<float> unpack_floats(const TraceRecord& r, std::size_t n) {
  std::vector<float> v(n);
  if (r.dtype == TraceDtype::F32) {
    if (r.payload.size() != n * 4)
      throw IntegrityError("trace: fp32 payload size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(r.payload[4 * i + k]) << (8 * k);
      v[i] = std::bit_cast<float>(u);
    }
  } else if (r.dtype == TraceDtype::F16) {
    if (r.payload.size() != n * 2)
      throw IntegrityError("trace: fp16 payload size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint16_t u =
          static_cast<std::uint16_t>(r.payload[2 * i] | (r.payload[2 * i + 1] << 8));
      v[i] = fp16_to_fp32(u);
    }
  } else {
    throw IntegrityError("trace: record dtype is not a float format");
  }
  return v;
}

}  // namespace

void write_trace(const std::string& path, const TraceFile& tf) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u16(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(tf.records.size()));
  for (const TraceRecord& r : tf.records) {
    put_u32(buf, r.layer_id);
    buf.push_back(r.pass);
    buf.push_back(static_cast<std::uint8_t>(r.role));
    buf.push_back(static_cast<std::uint8_t>(r.dims.size()));
    for (std::uint32_t d : r.dims) put_u32(buf, d);
    buf.push_back(static_cast<std::uint8_t>(r.dtype));
    put_u64(buf, r.payload.size());
    buf.insert(buf.end(), r.payload.begin(), r.payload.end());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("trace: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw ValidationError("trace: write failed for '" + path + "'");
}

TraceFile read_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("trace: cannot open '" + path + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  Reader rd{buf.data(), buf.size()};
  rd.need(4, "magic");
  if (!std::equal(kMagic, kMagic + 4, buf.begin()))
    throw IntegrityError("trace: bad magic at byte offset 0");
  rd.pos = 4;
  const std::uint16_t version = rd.u16("version");
  if (version != kVersion)
    throw IntegrityError("trace: unsupported version " + std::to_string(version) +
                         " at byte offset 4");
  const std::uint32_t count = rd.u32("record count");
  TraceFile tf;
  tf.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TraceRecord r;
    r.layer_id = rd.u32("layer id");
    r.pass = rd.u8("pass");
    const std::uint8_t role = rd.u8("role");
    if (role > 5)
      throw IntegrityError("trace: unknown role " + std::to_string(role) + " at byte offset " +
                           std::to_string(rd.pos - 1));
    r.role = static_cast<TraceRole>(role);
    const std::uint8_t ndims = rd.u8("ndims");
    for (int d = 0; d < ndims; ++d) r.dims.push_back(rd.u32("dim"));
    const std::uint8_t dtype = rd.u8("dtype");
    if (dtype > 3)
      throw IntegrityError("trace: unknown dtype " + std::to_string(dtype) + " at byte offset " +
                           std::to_string(rd.pos - 1));
    r.dtype = static_cast<TraceDtype>(dtype);
    const std::uint64_t plen = rd.u64("payload length");
    rd.need(plen, "payload");
    r.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(rd.pos),
                     buf.begin() + static_cast<std::ptrdiff_t>(rd.pos + plen));
    rd.pos += plen;
    tf.records.push_back(std::move(r));
  }
  if (rd.pos != buf.size())
    throw IntegrityError("trace: trailing bytes at byte offset " + std::to_string(rd.pos));
  return tf;
}

TraceRecord make_tensor_record(std::uint32_t layer_id, std::uint8_t pass, TraceRole role,
                               const Tensor3D& t, bool half) {
  TraceRecord r;
  r.layer_id = layer_id;
  r.pass = pass;
  r.role = role;
  r.dims = {static_cast<std::uint32_t>(t.c), static_cast<std::uint32_t>(t.h),
            static_cast<std::uint32_t>(t.w)};
  r.dtype = half ? TraceDtype::F16 : TraceDtype::F32;
  r.payload = pack_floats(t.v, half);
  return r;
}

TraceRecord make_filter_record(std::uint32_t layer_id, std::uint8_t pass, TraceRole role,
                               const FilterBank& w, bool half) {
  TraceRecord r;
  r.layer_id = layer_id;
  r.pass = pass;
  r.role = role;
  r.dims = {static_cast<std::uint32_t>(w.m), static_cast<std::uint32_t>(w.c),
            static_cast<std::uint32_t>(w.r), static_cast<std::uint32_t>(w.s)};
  r.dtype = half ? TraceDtype::F16 : TraceDtype::F32;
  r.payload = pack_floats(w.v, half);
  return r;
}

TraceRecord make_bitmap_record(std::uint32_t layer_id, std::uint8_t pass, const OutputBitmap& b) {
  TraceRecord r;
  r.layer_id = layer_id;
  r.pass = pass;
  r.role = TraceRole::Bitmap;
  r.dims = {static_cast<std::uint32_t>(b.c), static_cast<std::uint32_t>(b.h),
            static_cast<std::uint32_t>(b.w)};
  r.dtype = TraceDtype::Bitmap;
  r.payload = b.bytes;
  return r;
}

TraceRecord make_offsets_record(std::uint32_t layer_id, std::uint8_t pass, const OffsetMap& m) {
  TraceRecord r;
  r.layer_id = layer_id;
  r.pass = pass;
  r.role = TraceRole::Offsets;
  r.dims = {static_cast<std::uint32_t>(m.c), static_cast<std::uint32_t>(m.h),
            static_cast<std::uint32_t>(m.w)};
  r.dtype = TraceDtype::Offsets;
  r.payload = serialize_offsets(m);
  return r;
}

Tensor3D tensor_from_record(const TraceRecord& r) {
  if (r.dims.size() != 3) throw IntegrityError("trace: tensor record needs 3 dims");
  Tensor3D t(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]),
             static_cast<int>(r.dims[2]));
  t.v = unpack_floats(r, t.v.size());
  return t;
}

FilterBank filter_from_record(const TraceRecord& r) {
  if (r.dims.size() != 4) throw IntegrityError("trace: filter record needs 4 dims");
  FilterBank w(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]),
               static_cast<int>(r.dims[2]), static_cast<int>(r.dims[3]));
  w.v = unpack_floats(r, w.v.size());
  return w;
}

OutputBitmap bitmap_from_record(const TraceRecord& r) {
  if (r.dims.size() != 3 || r.dtype != TraceDtype::Bitmap)
    throw IntegrityError("trace: malformed bitmap record");
  OutputBitmap b(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]),
                 static_cast<int>(r.dims[2]));
  if (r.payload.size() != b.bytes.size())
    throw IntegrityError("trace: bitmap payload size mismatch");
  b.bytes = r.payload;
  return b;
}

OffsetMap offsets_from_record(const TraceRecord& r) {
  if (r.dims.size() != 3 || r.dtype != TraceDtype::Offsets)
    throw IntegrityError("trace: malformed offset record");
  return deserialize_offsets(r.payload.data(), r.payload.size(), static_cast<int>(r.dims[0]),
                             static_cast<int>(r.dims[1]), static_cast<int>(r.dims[2]));
}

TraceFile trace_from_step(const StepTrace& step, bool half) {
  TraceFile tf;
  const std::uint32_t n = static_cast<std::uint32_t>(step.layers.size());
  for (std::uint32_t li = 0; li < n; ++li) {
    const LayerTrace& lt = step.layers[li];
    tf.records.push_back(make_tensor_record(li, 0, TraceRole::Activation, lt.f_in[0], half));
    tf.records.push_back(make_tensor_record(li, 0, TraceRole::Activation, lt.f_out[0], half));
    if (!lt.mask.empty()) tf.records.push_back(make_bitmap_record(li, 0, lt.mask[0]));
    tf.records.push_back(make_offsets_record(li, 0, encode_tc_offsets(lt.f_in[0])));
    tf.records.push_back(make_filter_record(li, 0, TraceRole::Weights, lt.weights, half));
  }
  for (std::uint32_t li = 0; li < n; ++li) {
    const LayerTrace& lt = step.layers[li];
    tf.records.push_back(make_tensor_record(li, 1, TraceRole::Gradient, lt.g_at_out[0], half));
    tf.records.push_back(make_tensor_record(li, 1, TraceRole::Gradient, lt.g_at_in[0], half));
  }
  for (std::uint32_t li = 0; li < n; ++li)
    tf.records.push_back(
        make_filter_record(li, 2, TraceRole::WeightGrad, step.layers[li].dweights, half));
  return tf;
}

std::vector<std::string> generate_traces(const std::string& dir, const TraceGenOptions& opt) {
  std::filesystem::create_directories(dir);
  Rng rng(opt.seed);
  const ModelConfig& mc = opt.model;
  Model model = build_model(mc.in_c, mc.in_h, mc.in_w, mc.layers, mc.loss, rng);

  std::vector<std::string> paths;
  for (int s = 0; s < opt.steps; ++s) {
    Dataset ds = make_synthetic_dataset(mc.batch, mc.in_c, mc.in_h, mc.in_w, mc.classes, rng);
    StepTrace st = train_step(model, ds.samples, ds.labels, mc.lr);
    char name[32];
    std::snprintf(name, sizeof(name), "step_%04d.sgtr", s);
    const std::string path = (std::filesystem::path(dir) / name).string();
    write_trace(path, trace_from_step(st, opt.half));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace sgt
