"""Reference values for the unit tests, computed independently of the C++ code.

Uses mpmath at 40 significant digits and plain Python arithmetic only; the
numbers printed here are pasted into the test sources. Re-run with
`python3 tests/oracles/compute_oracles.py`.
"""
from collections import Counter

from mpmath import mp, mpf, exp, log, sqrt, tanh

mp.dps = 40


def show(name, values):
    if not isinstance(values, (list, tuple)):
        values = [values]
    print(f"{name}: " + ", ".join(mp.nstr(v, 17) for v in values))


def sigmoid(z):
    return 1 / (1 + exp(-z))


def softmax(z):
    m = max(z)
    e = [exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def cos(a, b):
    na, nb = sqrt(dot(a, a)), sqrt(dot(b, b))
    return mpf(0) if na == 0 or nb == 0 else dot(a, b) / (na * nb)


def matvec(m, v):
    return [dot(row, v) for row in m]


def zipf_tf(rank):
    return mpf(10) ** 6 * mpf(rank) ** mpf("-1.07")


# Zipf term frequency at ranks 1 and 100.
show("tf(1)", zipf_tf(1))
show("tf(100)", zipf_tf(100))

# Softmax of four hand logits.
show("softmax[1,2,3,4]", softmax([mpf(1), mpf(2), mpf(3), mpf(4)]))

# Tf-idf cosine on a 3-document corpus; query "the cat".
docs = [["the", "cat", "sat"], ["the", "dog", "sat", "down"], ["a", "cat", "and", "a", "dog"]]
n = len(docs)
df = Counter(t for d in docs for t in set(d))
idf = {t: log(mpf(1 + n) / (1 + df[t])) + 1 for t in df}


def tfidf(tokens):
    c = Counter(tokens)
    return {t: c[t] * idf[t] for t in c if t in idf}


def sparse_cos(u, v):
    num = sum(u[t] * v.get(t, 0) for t in u)
    nu = sqrt(sum(x * x for x in u.values()))
    nv = sqrt(sum(x * x for x in v.values()))
    return mpf(0) if nu == 0 or nv == 0 else num / (nu * nv)


query = tfidf(["the", "cat"])
show("ir scores", [sparse_cos(query, tfidf(d)) for d in docs])

# One attention hop over three 2-d profile vectors.
q = [mpf(1), mpf(0)]
profile = [[mpf(1), mpf(1)], [mpf(0), mpf(2)], [mpf(-1), mpf("0.5")]]
w = softmax([cos(q, p) for p in profile])
q_plus = [q[k] + sum(w[i] * profile[i][k] for i in range(3)) for k in range(2)]
show("profile_attend", q_plus)

# Key-value attention, 5 pairs, top 2, residual.
qp = [mpf(1), mpf("0.5")]
keys = [[1, 0], [0, 1], [1, 1], [-1, 0], [mpf("0.5"), -1]]
vals = [[1, 2], [3, -1], [0, 1], [2, 2], [-1, -1]]
keys = [[mpf(x) for x in k] for k in keys]
vals = [[mpf(x) for x in v] for v in vals]
sims = [cos(qp, k) for k in keys]
top = sorted(range(5), key=lambda j: (-sims[j], j))[:2]
top.sort()
s = softmax([sims[j] for j in top])
qpp = [qp[k] + sum(s[i] * vals[j][k] for i, j in enumerate(top)) for k in range(2)]
print("kv selected", top)
show("kv_attend", qpp)

# One LSTM step, hidden 2, input 2, gates stacked [i; f; o; g].
Wx = [[0.1, -0.2], [0.3, 0.4], [-0.5, 0.1], [0.2, 0.2], [0.05, -0.1], [0.3, -0.3], [0.2, 0.1], [-0.4, 0.6]]
Wh = [[0.2, 0.1], [-0.1, 0.3], [0.4, -0.2], [0.1, 0.1], [-0.3, 0.2], [0.05, 0.05], [0.3, -0.1], [0.2, 0.4]]
b = [0.01, -0.02, 0.03, 0.5, -0.1, 0.2, 0.0, 0.1]
Wx = [[mpf(str(v)) for v in r] for r in Wx]
Wh = [[mpf(str(v)) for v in r] for r in Wh]
b = [mpf(str(v)) for v in b]
x = [mpf("0.5"), mpf(-1)]
h_prev = [mpf("0.1"), mpf("-0.2")]
c_prev = [mpf("0.3"), mpf("0.1")]
z = [a + c + d for a, c, d in zip(matvec(Wx, x), matvec(Wh, h_prev), b)]
gi = [sigmoid(v) for v in z[0:2]]
gf = [sigmoid(v) for v in z[2:4]]
go = [sigmoid(v) for v in z[4:6]]
gg = [tanh(v) for v in z[6:8]]
c = [gf[k] * c_prev[k] + gi[k] * gg[k] for k in range(2)]
h = [go[k] * tanh(c[k]) for k in range(2)]
show("lstm h", h)
show("lstm c", c)

# Decoder attention step over a 2-row profile memory.
F = [[mpf(1), mpf(0)], [mpf("0.5"), mpf(-1)]]
hd = [mpf("0.3"), mpf("-0.6")]
Wa = [[mpf(1), mpf("0.5")], [mpf("-0.5"), mpf(2)]]
xt = [mpf("0.2"), mpf("0.4")]
cp = [mpf("0.1"), mpf("-0.3")]
Wc = [[mpf("0.5"), mpf("-0.2"), mpf("0.1"), mpf("0.3")], [mpf(0), mpf("0.4"), mpf("-0.6"), mpf("0.2")]]
a = softmax(matvec(F, matvec(Wa, hd)))
ct = [sum(a[r] * F[r][k] for r in range(2)) for k in range(2)]
xh = [tanh(v) for v in matvec(Wc, cp + xt)]
show("attend a", a)
show("attend c", ct)
show("attend x_hat", xh)

# Profile memory row for "alpha beta": vocabulary ranks beta=1, alpha=2.
alpha = lambda rank: 1 / (1 + log(1 + zipf_tf(rank)))
e_beta = [mpf("0.5"), mpf(-1), mpf(2)]
e_alpha = [mpf(-0.25), mpf("0.75"), mpf(1)]
row = [alpha(2) * e_alpha[k] + alpha(1) * e_beta[k] for k in range(3)]
show("alpha(1), alpha(2)", [alpha(1), alpha(2)])
show("profile row", row)
