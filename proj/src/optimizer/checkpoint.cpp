#include "pdeo/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

namespace pdeo {

namespace {

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    Writer& real(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, " %a", v);
        out_ << buf;
        return *this;
    }
    Writer& vec(const Vec3& v) { return real(v[0]).real(v[1]).real(v[2]); }
    template <typename I>
    Writer& integer(I v) {
        out_ << ' ' << v;
        return *this;
    }
    Writer& tag(const char* t) {
        out_ << t;
        return *this;
    }
    void end() { out_ << '\n'; }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::string token() {
        std::string t;
        if (!(in_ >> t)) throw ConfigError("checkpoint: unexpected end of stream");
        return t;
    }
    void expect(const char* tag) {
        const std::string t = token();
        if (t != tag) throw ConfigError("checkpoint: expected '" + std::string(tag) + "', got '" + t + "'");
    }
    double real() {
        const std::string t = token();
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (end == t.c_str() || *end != '\0') throw ConfigError("checkpoint: bad real '" + t + "'");
        return v;
    }
    Vec3 vec() {
        Vec3 v;
        for (int a = 0; a < 3; ++a) v[a] = real();
        return v;
    }
    long long integer() {
        const std::string t = token();
        char* end = nullptr;
        const long long v = std::strtoll(t.c_str(), &end, 10);
        if (end == t.c_str() || *end != '\0') throw ConfigError("checkpoint: bad integer '" + t + "'");
        return v;
    }

private:
    std::istream& in_;
};

}  // namespace

void save_checkpoint(std::ostream& out, const Scene& scene, const OptimizerState& state) {
    if (state.size() != scene.size()) throw UsageError("save_checkpoint: state and scene differ in size");
    Writer w(out);
    w.tag("pdeo-checkpoint").integer(kCheckpointVersion).end();
    w.tag("mode").integer(static_cast<int>(scene.mode)).end();
    w.tag("bbox").vec(scene.bbox.lo).vec(scene.bbox.hi).end();
    w.tag("gaussians").integer(scene.size()).end();
    for (const auto& g : scene.gaussians) {
        w.tag("g").vec(g.mu).vec(g.color).real(g.opacity_logit).vec(g.log_scale).real(g.angle);
        for (int k = 0; k < 9; ++k) w.real(g.rot.data()[k]);
        w.real(g.depth_key).end();
    }
    w.tag("step").integer(state.step).end();
    for (std::size_t i = 0; i < state.size(); ++i) {
        w.tag("s");
        for (const double v : state.first_moment[i]) w.real(v);
        for (const double v : state.second_moment[i]) w.real(v);
        w.real(state.grad_accum[i]).integer(state.grad_count[i]).vec(state.last_applied[i]).vec(state.last_raw[i]);
        w.end();
    }
    const VelocityField& f = state.field;
    w.tag("field").vec(f.origin()).real(f.cell_size());
    w.integer(f.dims()[0]).integer(f.dims()[1]).integer(f.dims()[2]).real(f.lambda_g()).integer(f.dim()).end();
    for (const auto& v : f.velocities()) w.tag("v").vec(v).end();
    w.tag("end").end();
}

Checkpoint load_checkpoint(std::istream& in) {
    Reader r(in);
    r.expect("pdeo-checkpoint");
    if (r.integer() != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
    Checkpoint cp;
    r.expect("mode");
    const long long mode = r.integer();
    if (mode != 0 && mode != 1) throw ConfigError("checkpoint: bad mode");
    cp.scene.mode = static_cast<Mode>(mode);
    r.expect("bbox");
    cp.scene.bbox.lo = r.vec();
    cp.scene.bbox.hi = r.vec();
    r.expect("gaussians");
    const long long n = r.integer();
    if (n < 0) throw ConfigError("checkpoint: negative count");
    cp.scene.gaussians.resize(static_cast<std::size_t>(n));
    for (auto& g : cp.scene.gaussians) {
        r.expect("g");
        g.mu = r.vec();
        g.color = r.vec();
        g.opacity_logit = r.real();
        g.log_scale = r.vec();
        g.angle = r.real();
        for (int k = 0; k < 9; ++k) g.rot.data()[k] = r.real();
        g.depth_key = r.real();
    }
    r.expect("step");
    const long long step = r.integer();
    std::vector<ParamBlock> m1(static_cast<std::size_t>(n)), m2(static_cast<std::size_t>(n));
    std::vector<double> accum(static_cast<std::size_t>(n));
    std::vector<std::uint32_t> count(static_cast<std::size_t>(n));
    std::vector<Vec3> applied(static_cast<std::size_t>(n)), raw(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        r.expect("s");
        for (auto& v : m1[i]) v = r.real();
        for (auto& v : m2[i]) v = r.real();
        accum[i] = r.real();
        count[i] = static_cast<std::uint32_t>(r.integer());
        applied[i] = r.vec();
        raw[i] = r.vec();
    }
    r.expect("field");
    const Vec3 origin = r.vec();
    const double cell = r.real();
    VoxelIndex dims;
    for (auto& d : dims) d = static_cast<int>(r.integer());
    const double lambda_g = r.real();
    const int dim = static_cast<int>(r.integer());
    VelocityField field(origin, cell, dims, lambda_g, dim);
    for (auto& v : field.velocities_mut()) {
        r.expect("v");
        v = r.vec();
    }
    r.expect("end");
    cp.state = OptimizerState(static_cast<std::size_t>(n), std::move(field));
    cp.state.step = step;
    cp.state.first_moment = std::move(m1);
    cp.state.second_moment = std::move(m2);
    cp.state.grad_accum = std::move(accum);
    cp.state.grad_count = std::move(count);
    cp.state.last_applied = std::move(applied);
    cp.state.last_raw = std::move(raw);
    return cp;
}

}  // namespace pdeo
