// Native evaluation of field modes on PBW monomials mod U_p.
//
// Mirrors the pure Python engine in graded_lie.py / distributions.py:
// monomials are interned sorted tuples of generator codes, straightening
// inserts one generator at a time, and every node memoizes a_(r) applied to
// a monomial.  Brackets, generator codes, witnesses and generators of a given
// degree come from Python callbacks and are cached here.

#include <absl/container/flat_hash_map.h>
#include <absl/container/node_hash_map.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <gmpxx.h>

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace py = pybind11;

using Code = int64_t;
using Mono = std::vector<Code>;
template <class K, class V, class H = absl::container_internal::hash_default_hash<K>>
using Map = absl::flat_hash_map<K, V, H>;

// Exact rational that stays a machine integer until an operation overflows
// or leaves the integers.
class Coef {
public:
    Coef() = default;
    Coef(long v) : small_(v) {}
    Coef(int v) : small_(v) {}
    explicit Coef(const mpq_class& q) { set(q); }
    Coef(const Coef& o) : small_(o.small_), big_(o.big_ ? new mpq_class(*o.big_) : nullptr) {}
    Coef(Coef&& o) noexcept : small_(o.small_), big_(o.big_) { o.big_ = nullptr; }
    Coef& operator=(const Coef& o) {
        if (this != &o) {
            delete big_;
            small_ = o.small_;
            big_ = o.big_ ? new mpq_class(*o.big_) : nullptr;
        }
        return *this;
    }
    Coef& operator=(Coef&& o) noexcept {
        std::swap(small_, o.small_);
        std::swap(big_, o.big_);
        return *this;
    }
    ~Coef() { delete big_; }

    bool zero() const { return big_ ? sgn(*big_) == 0 : small_ == 0; }

    mpq_class q() const { return big_ ? *big_ : mpq_class(static_cast<long>(small_)); }

    bool small_int(long& out) const {
        if (big_) return false;
        out = small_;
        return true;
    }

    Coef& operator+=(const Coef& o) {
        if (!big_ && !o.big_) {
            int64_t r;
            if (!__builtin_add_overflow(small_, o.small_, &r)) {
                small_ = r;
                return *this;
            }
        }
        set(q() + o.q());
        return *this;
    }

    friend Coef operator*(const Coef& a, const Coef& b) {
        if (!a.big_ && !b.big_) {
            int64_t r;
            if (!__builtin_mul_overflow(a.small_, b.small_, &r)) return Coef(static_cast<long>(r));
        }
        return Coef(mpq_class(a.q() * b.q()));
    }

    Coef operator-() const { return big_ ? Coef(mpq_class(-*big_)) : Coef(static_cast<long>(-small_)); }

private:
    void set(const mpq_class& q) {
        if (q.get_den() == 1 && q.get_num().fits_slong_p()) {
            delete big_;
            big_ = nullptr;
            small_ = q.get_num().get_si();
        } else if (big_) {
            *big_ = q;
        } else {
            big_ = new mpq_class(q);
        }
    }

    int64_t small_ = 0;
    mpq_class* big_ = nullptr;
};

using Vec = std::vector<std::pair<int32_t, Coef>>;

static constexpr int DEG_SHIFT = 48;
static constexpr int RANK_SHIFT = 32;
static constexpr int64_t DEG_BIAS = int64_t(1) << 14;

static inline int degree(Code c) { return int((c >> DEG_SHIFT) - DEG_BIAS); }
static inline int rank_of(Code c) { return int((c >> RANK_SHIFT) & 0xFFFF); }

struct MonoHash {
    size_t operator()(const Mono& m) const noexcept {
        uint64_t h = 1469598103934665603ULL;
        for (Code c : m) {
            h ^= uint64_t(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return size_t(h);
    }
};

struct PairHash {
    size_t operator()(const std::pair<int64_t, int64_t>& k) const noexcept {
        return size_t(uint64_t(k.first) * 0x9e3779b97f4a7c15ULL ^ uint64_t(k.second));
    }
};

struct TripleKey {
    Code g;
    int32_t mono;
    int32_t p;
    bool operator==(const TripleKey& o) const { return g == o.g && mono == o.mono && p == o.p; }
};

struct TripleHash {
    size_t operator()(const TripleKey& k) const noexcept {
        uint64_t h = uint64_t(k.g) * 0x9e3779b97f4a7c15ULL;
        h ^= (uint64_t(uint32_t(k.mono)) << 16) ^ uint64_t(uint32_t(k.p));
        return size_t(h ^ (h >> 29));
    }
};

static inline uint64_t act_key(int p, int r, int32_t mono) {
    if (p < -64 || p > 191 || r < -(1 << 23) || r >= (1 << 23)) {
        throw std::out_of_range("mode or precision out of kernel range");
    }
    return (uint64_t(p + 64) << 56) | (uint64_t(r + (1 << 23)) << 32) | uint64_t(uint32_t(mono));
}

enum Kind { UNIT, GENERATOR, COMBINATION, DERIVATIVE, NTH, PYTHON };

struct PlanItem {
    Coef c;
    int inner, r_in, outer, r_out;
};

struct Node {
    Kind kind;
    py::object obj;
    // memo of a_(r) on monomials; values live in a deque so references
    // handed out stay valid while the index rehashes
    Map<uint64_t, uint32_t> act_index;
    std::deque<Vec> act_store;
    Map<int, int> witness;
    // generator
    int rank = 0, shift = 0;
    Coef scale = 1;
    Map<int, Code> codes;   // r -> code, -1 if none
    // combination
    std::vector<std::pair<Coef, int>> items;
    // derivative / nth product
    int a = -1, b = -1, n = 0;
    absl::node_hash_map<uint64_t, std::vector<PlanItem>> plans;
};

static Coef binomial(int n, int j) {
    if (j < 0) return 0;
    if (n >= 0 && j > n) return 0;
    mpz_class num = 1, den = 1;
    for (int i = 0; i < j; ++i) {
        num *= (n - i);
        den *= (i + 1);
    }
    mpq_class q(num, den);
    q.canonicalize();
    return Coef(q);
}

class Kernel {
public:
    Kernel(std::vector<int> central, py::object bracket_cb, py::object code_cb, py::object gens_cb,
           py::object unavailable, py::object make_scalar)
        : bracket_cb_(std::move(bracket_cb)), code_cb_(std::move(code_cb)), gens_cb_(std::move(gens_cb)),
          unavailable_(std::move(unavailable)), make_scalar_(std::move(make_scalar)) {
        for (int r : central) central_.push_back(r);
        intern(Mono{});
    }

    // -- interning --------------------------------------------------------------

    int32_t intern(const Mono& m) {
        auto it = ids_.find(m);
        if (it != ids_.end()) return it->second;
        int32_t id = int32_t(monos_.size());
        monos_.push_back(m);
        ids_.emplace(m, id);
        return id;
    }

    int32_t intern_py(const py::handle& t) {
        Mono m;
        for (auto x : t) m.push_back(x.cast<Code>());
        return intern(m);
    }

    py::tuple mono_py(int32_t id) const {
        const Mono& m = monos_[id];
        py::tuple t(m.size());
        for (size_t i = 0; i < m.size(); ++i) t[i] = py::int_(m[i]);
        return t;
    }

    // -- scalars ----------------------------------------------------------------

    Coef to_coef(const py::handle& x) const {
        if (PyLong_Check(x.ptr())) {
            int overflow = 0;
            long long v = PyLong_AsLongLongAndOverflow(x.ptr(), &overflow);
            if (!overflow) return Coef(static_cast<long>(v));
        }
        mpq_class q(py::str(x).cast<std::string>());
        q.canonicalize();
        return Coef(q);
    }

    py::object from_coef(const Coef& c) const {
        long v;
        if (c.small_int(v)) return py::int_(v);
        mpq_class q = c.q();
        if (q.get_den() == 1 && q.get_num().fits_slong_p()) return py::int_(q.get_num().get_si());
        return make_scalar_(py::str(q.get_str()));
    }

    py::list vec_py(const Vec& v) const {
        py::list out;
        for (const auto& [m, c] : v) out.append(py::make_tuple(mono_py(m), from_coef(c)));
        return out;
    }

    // -- brackets and straightening ------------------------------------------------

    const std::vector<std::pair<Code, Coef>>& bracket(Code x, Code y) {
        auto key = std::make_pair(x, y);
        auto it = brackets_.find(key);
        if (it != brackets_.end()) return it->second;
        std::vector<std::pair<Code, Coef>> out;
        py::object raw = bracket_cb_(x, y);
        for (auto item : raw.cast<py::dict>()) {
            out.emplace_back(item.first.cast<Code>(), to_coef(item.second));
        }
        return brackets_.emplace(key, std::move(out)).first->second;
    }

    // g * mono mod U_p for a sorted monomial not in U_p.
    const Vec& insert(Code g, int32_t mono, int p) {
        TripleKey key{g, mono, p};
        auto it = inserts_.find(key);
        if (it != inserts_.end()) return insert_store_[it->second];
        Vec res;
        const Mono& m = monos_[mono];
        if (m.empty()) {
            if (degree(g) < p) res.emplace_back(intern(Mono{g}), Coef(1));
        } else if (g <= m[0]) {
            Mono w;
            w.reserve(m.size() + 1);
            w.push_back(g);
            w.insert(w.end(), m.begin(), m.end());
            res.emplace_back(intern(w), Coef(1));
        } else {
            Code h = m[0];
            int32_t rest = intern(Mono(m.begin() + 1, m.end()));
            Map<int32_t, Coef> acc;
            // g h rest = h (g rest) + [g, h] rest
            const Vec& first = insert(g, rest, p);
            for (const auto& [m2, c] : first) {
                const Vec& second = insert(h, m2, p);
                for (const auto& [m3, c3] : second) acc[m3] += c * c3;
            }
            const auto& br = bracket(g, h);
            for (const auto& [t, c] : br) {
                const Vec& third = insert(t, rest, p);
                for (const auto& [m3, c3] : third) acc[m3] += c * c3;
            }
            res = collect(acc);
        }
        inserts_.emplace(key, uint32_t(insert_store_.size()));
        insert_store_.push_back(std::move(res));
        return insert_store_.back();
    }

    static Vec collect(Map<int32_t, Coef>& acc) {
        Vec out;
        out.reserve(acc.size());
        for (auto& [k, v] : acc) {
            if (!v.zero()) out.emplace_back(k, std::move(v));
        }
        return out;
    }

    std::optional<std::vector<Code>>& gens_of_degree(int d) {
        auto it = by_degree_.find(d);
        if (it != by_degree_.end()) return it->second;
        py::object raw = gens_cb_(d);
        std::optional<std::vector<Code>> val;
        if (!raw.is_none()) val = raw.cast<std::vector<Code>>();
        return by_degree_.emplace(d, std::move(val)).first->second;
    }

    // least N >= p with g_{>=N} mono inside U_p
    int tail(int32_t mono, int p) {
        uint64_t key = (uint64_t(uint32_t(mono)) << 16) | uint64_t(uint16_t(p + 1024));
        auto it = tails_.find(key);
        if (it != tails_.end()) return it->second;
        int span = 0;
        for (Code g : monos_[mono]) {
            int d = degree(g);
            if (d < 0) span -= d;
        }
        int res = p;
        for (int d = p + span - 1; d >= p; --d) {
            auto gens = gens_of_degree(d);
            if (!gens) {
                res = d + 1;
                break;
            }
            bool hit = false;
            try {
                for (Code t : *gens) {
                    if (!insert(t, mono, p).empty()) {
                        hit = true;
                        break;
                    }
                }
            } catch (py::error_already_set& e) {
                if (!e.matches(unavailable_)) throw;
                hit = true;
            }
            if (hit) {
                res = d + 1;
                break;
            }
        }
        tails_.emplace(key, res);
        return res;
    }

    // (rest, central letters) of a monomial, if it has central letters
    const std::optional<std::pair<int32_t, Mono>>& split(int32_t mono) {
        auto it = splits_.find(mono);
        if (it != splits_.end()) return it->second;
        std::optional<std::pair<int32_t, Mono>> val;
        if (!central_.empty()) {
            Mono rest, cen;
            for (Code g : monos_[mono]) {
                bool is_central = false;
                for (int r : central_) is_central |= (rank_of(g) == r);
                (is_central ? cen : rest).push_back(g);
            }
            if (!cen.empty()) val = std::make_pair(intern(rest), cen);
        }
        return splits_.emplace(mono, std::move(val)).first->second;
    }

    int32_t merge(int32_t mono, const Mono& cen) {
        const Mono& m = monos_[mono];
        Mono w;
        w.reserve(m.size() + cen.size());
        size_t i = 0, j = 0;
        while (i < m.size() || j < cen.size()) {
            if (j == cen.size() || (i < m.size() && m[i] <= cen[j])) {
                w.push_back(m[i++]);
            } else {
                w.push_back(cen[j++]);
            }
        }
        return intern(w);
    }

    // -- nodes --------------------------------------------------------------------

    int add(std::unique_ptr<Node> node) {
        nodes_.push_back(std::move(node));
        return int(nodes_.size() - 1);
    }

    int node_unit(py::object obj) {
        auto nd = std::make_unique<Node>();
        nd->kind = UNIT;
        nd->obj = std::move(obj);
        return add(std::move(nd));
    }

    int node_generator(py::object obj, int rank, int shift, py::object scale) {
        auto nd = std::make_unique<Node>();
        nd->kind = GENERATOR;
        nd->obj = std::move(obj);
        nd->rank = rank;
        nd->shift = shift;
        nd->scale = to_coef(scale);
        return add(std::move(nd));
    }

    int node_combination(py::object obj, std::vector<std::pair<py::object, int>> items) {
        auto nd = std::make_unique<Node>();
        nd->kind = COMBINATION;
        nd->obj = std::move(obj);
        for (auto& [c, h] : items) nd->items.emplace_back(to_coef(c), h);
        return add(std::move(nd));
    }

    int node_derivative(py::object obj, int child) {
        auto nd = std::make_unique<Node>();
        nd->kind = DERIVATIVE;
        nd->obj = std::move(obj);
        nd->a = child;
        return add(std::move(nd));
    }

    int node_nth(py::object obj, int a, int b, int n) {
        auto nd = std::make_unique<Node>();
        nd->kind = NTH;
        nd->obj = std::move(obj);
        nd->a = a;
        nd->b = b;
        nd->n = n;
        return add(std::move(nd));
    }

    int node_python(py::object obj) {
        auto nd = std::make_unique<Node>();
        nd->kind = PYTHON;
        nd->obj = std::move(obj);
        return add(std::move(nd));
    }

    int witness(int h, int T) {
        Node& nd = *nodes_[h];
        auto it = nd.witness.find(T);
        if (it != nd.witness.end()) return it->second;
        int w = nd.obj.attr("witness")(T).cast<int>();
        nd.witness.emplace(T, w);
        return w;
    }

    const Vec& act(int h, int r, int32_t mono, int p) {
        Node& nd = *nodes_[h];
        uint64_t key = act_key(p, r, mono);
        auto it = nd.act_index.find(key);
        if (it != nd.act_index.end()) return nd.act_store[it->second];
        Vec res;
        bool done = false;
        const auto& sp = split(mono);
        if (sp && degree(sp->second.back()) < p) {
            // central letters commute past every mode
            int32_t rest = sp->first;
            Mono cen = sp->second;   // copied: interning below may rehash splits_
            const Vec& base = act(h, r, rest, p);
            res.reserve(base.size());
            for (const auto& [m, c] : base) res.emplace_back(merge(m, cen), c);
            done = true;
        }
        if (!done && r < witness(h, tail(mono, p))) res = compute(h, r, mono, p, 0);
        nd.act_index.emplace(key, uint32_t(nd.act_store.size()));
        nd.act_store.push_back(std::move(res));
        return nd.act_store.back();
    }

    Code code_of(Node& nd, int r) {
        auto it = nd.codes.find(r);
        if (it != nd.codes.end()) return it->second;
        py::object c = code_cb_(nd.rank, r + nd.shift);
        Code v = c.is_none() ? Code(-1) : c.cast<Code>();
        nd.codes.emplace(r, v);
        return v;
    }

    const std::vector<PlanItem>& plan(int h, int m, int T, int p, int extra) {
        Node& nd = *nodes_[h];
        uint64_t key = (uint64_t(uint32_t(m + (1 << 20))) << 40) | (uint64_t(uint32_t(T + 1024)) << 24) |
                       (uint64_t(uint32_t(p + 1024)) << 8) | uint64_t(uint8_t(extra));
        auto it = nd.plans.find(key);
        if (it != nd.plans.end()) return it->second;
        std::vector<PlanItem> out;
        int a = nd.a, b = nd.b, n = nd.n;
        // first sum: a_(n-j) b_(m+j); second: b_(m+n-j) a_(j)
        int nb = witness(b, T);
        int j_hi = n < 0 ? nb - m + extra : std::min(n + 1, nb - m + extra);
        for (int j = 0; j < j_hi; ++j) {
            Coef c = binomial(n, j);
            if (c.zero()) continue;
            if (j % 2) c = -c;
            out.push_back({c, b, m + j, a, n - j});
        }
        int na = witness(a, T);
        j_hi = n < 0 ? na + extra : std::min(n + 1, na + extra);
        int sign = n % 2 == 0 ? -1 : 1;
        for (int j = 0; j < j_hi; ++j) {
            Coef c = binomial(n, j);
            if (c.zero()) continue;
            if ((j % 2 == 1) != (sign < 0)) c = -c;
            out.push_back({c, a, j, b, m + n - j});
        }
        return nd.plans.emplace(key, std::move(out)).first->second;
    }

    Vec compute(int h, int r, int32_t mono, int p, int extra) {
        Node& nd = *nodes_[h];
        switch (nd.kind) {
        case UNIT: {
            Vec out;
            if (r == -1) out.emplace_back(mono, Coef(1));
            return out;
        }
        case GENERATOR: {
            Vec out;
            if (nd.scale.zero()) return out;
            Code g = code_of(nd, r);
            if (g < 0) return out;
            const Vec& res = insert(g, mono, p);
            out.reserve(res.size());
            for (const auto& [m, c] : res) out.emplace_back(m, c * nd.scale);
            return out;
        }
        case COMBINATION: {
            Map<int32_t, Coef> acc;
            for (const auto& [c, child] : nd.items) {
                const Vec& v = act(child, r, mono, p);
                for (const auto& [m, cm] : v) acc[m] += c * cm;
            }
            return collect(acc);
        }
        case DERIVATIVE: {
            Vec out;
            if (r == 0) return out;
            const Vec& v = act(nd.a, r - 1, mono, p);
            out.reserve(v.size());
            for (const auto& [m, c] : v) out.emplace_back(m, c * Coef(-r));
            return out;
        }
        case NTH: {
            Map<int32_t, Coef> acc;
            const std::vector<PlanItem>& items = plan(h, r, tail(mono, p), p, extra);
            Coef f;
            for (const auto& it : items) {
                const Vec& Z = act(it.inner, it.r_in, mono, p);
                for (const auto& [z, cz] : Z) {
                    const Vec& A = act(it.outer, it.r_out, z, p);
                    if (A.empty()) continue;
                    f = it.c * cz;
                    for (const auto& [w, cw] : A) acc[w] += f * cw;
                }
            }
            return collect(acc);
        }
        case PYTHON: {
            Vec out;
            py::object raw = nd.obj.attr("_native_act")(r, mono_py(mono), p);
            Map<int32_t, Coef> acc;
            for (auto item : raw) {
                auto t = item.cast<py::tuple>();
                acc[intern_py(t[0])] += to_coef(t[1]);
            }
            return collect(acc);
        }
        }
        throw std::logic_error("unknown node kind");
    }

    // -- python entry points --------------------------------------------------------

    py::list act_on(int h, int r, py::list terms, int p) {
        Map<int32_t, Coef> acc;
        for (auto item : terms) {
            auto t = item.cast<py::tuple>();
            Coef c = to_coef(t[1]);
            const Vec& v = act(h, r, intern_py(t[0]), p);
            for (const auto& [m, cm] : v) acc[m] += c * cm;
        }
        return vec_py(collect(acc));
    }

    py::list act_extended(int h, int r, py::tuple mono, int p, int extra) {
        return vec_py(compute(h, r, intern_py(mono), p, extra));
    }

    py::list insert_py(Code g, py::tuple mono, int p) { return vec_py(insert(g, intern_py(mono), p)); }

    int tail_py(py::tuple mono, int p) { return tail(intern_py(mono), p); }

    py::dict stats() const {
        py::dict d;
        size_t acts = 0;
        for (const auto& nd : nodes_) acts += nd->act_store.size();
        d["monomials"] = monos_.size();
        d["inserts"] = inserts_.size();
        d["nodes"] = nodes_.size();
        d["acts"] = acts;
        return d;
    }

    // the kernel and the Python objects it calls back into reference each
    // other, so the type takes part in cyclic garbage collection
    int traverse(visitproc visit, void* arg) const {
        for (const py::object* o : {&bracket_cb_, &code_cb_, &gens_cb_, &unavailable_, &make_scalar_})
            Py_VISIT(o->ptr());
        for (const auto& nd : nodes_) Py_VISIT(nd->obj.ptr());
        return 0;
    }

    void clear_refs() {
        for (py::object* o : {&bracket_cb_, &code_cb_, &gens_cb_, &unavailable_, &make_scalar_})
            *o = py::none();
        for (auto& nd : nodes_) nd->obj = py::none();
    }

private:
    py::object bracket_cb_, code_cb_, gens_cb_, unavailable_, make_scalar_;
    std::vector<int> central_;
    std::deque<Mono> monos_;   // deque: references survive interning
    Map<Mono, int32_t, MonoHash> ids_;
    std::unordered_map<std::pair<int64_t, int64_t>, std::vector<std::pair<Code, Coef>>, PairHash> brackets_;
    Map<TripleKey, uint32_t, TripleHash> inserts_;
    std::deque<Vec> insert_store_;
    Map<uint64_t, int> tails_;
    std::unordered_map<int, std::optional<std::vector<Code>>> by_degree_;
    std::unordered_map<int32_t, std::optional<std::pair<int32_t, Mono>>> splits_;
    std::vector<std::unique_ptr<Node>> nodes_;
};

PYBIND11_MODULE(_kernel, m) {
    m.doc() = "Native mode evaluation for vertexlab";
    py::class_<Kernel>(m, "Kernel", py::custom_type_setup([](PyHeapTypeObject* heap_type) {
        auto* type = &heap_type->ht_type;
        type->tp_flags |= Py_TPFLAGS_HAVE_GC;
        type->tp_traverse = [](PyObject* self, visitproc visit, void* arg) {
            Py_VISIT(Py_TYPE(self));
            if (!py::detail::is_holder_constructed(self)) return 0;
            return py::cast<Kernel&>(py::handle(self)).traverse(visit, arg);
        };
        type->tp_clear = [](PyObject* self) {
            if (py::detail::is_holder_constructed(self)) py::cast<Kernel&>(py::handle(self)).clear_refs();
            return 0;
        };
    }))
        .def(py::init<std::vector<int>, py::object, py::object, py::object, py::object, py::object>())
        .def("node_unit", &Kernel::node_unit)
        .def("node_generator", &Kernel::node_generator)
        .def("node_combination", &Kernel::node_combination)
        .def("node_derivative", &Kernel::node_derivative)
        .def("node_nth", &Kernel::node_nth)
        .def("node_python", &Kernel::node_python)
        .def("act_on", &Kernel::act_on)
        .def("act_extended", &Kernel::act_extended)
        .def("insert", &Kernel::insert_py)
        .def("tail", &Kernel::tail_py)
        .def("stats", &Kernel::stats);
}
