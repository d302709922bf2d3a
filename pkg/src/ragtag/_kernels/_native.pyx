# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: trigram hash embedding and exact cosine top-k scans.

Mirrors ``_pyfallback`` operation for operation. Floating-point work happens
in the same order as the pure-Python code (and the build disables FMA
contraction), so both backends return bit-identical results.
"""

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc

BACKEND = "native"

cdef unsigned long long _FNV_OFFSET = 0xCBF29CE484222325ULL
cdef unsigned long long _FNV_PRIME = 0x100000001B3ULL
cdef unsigned int _STX = 0x02
cdef unsigned int _ETX = 0x03


cdef inline unsigned long long _mix(unsigned long long h, unsigned long long value) noexcept nogil:
    return (h ^ value) * _FNV_PRIME


def hash_embed(str text, int dim, long long seed):
    """Feature-hash character trigrams of ``text`` into a unit-norm vector."""
    cdef Py_ssize_t n = len(text)
    if dim <= 0:
        raise ValueError("dim must be positive")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if n == 0:
        raise ValueError("text must be non-empty")

    cdef unsigned int* cps = <unsigned int*> malloc((n + 2) * sizeof(unsigned int))
    cdef double* acc = <double*> malloc(dim * sizeof(double))
    if cps == NULL or acc == NULL:
        free(cps)
        free(acc)
        raise MemoryError()

    cdef Py_ssize_t i
    cdef Py_UCS4 ch
    cps[0] = _STX
    i = 1
    for ch in text:
        cps[i] = <unsigned int> ch
        i += 1
    cps[n + 1] = _ETX

    cdef Py_ssize_t n_grams = n
    cdef unsigned long long salt = 0
    cdef unsigned long long useed = <unsigned long long> seed
    cdef unsigned long long h
    cdef double ss, norm
    cdef Py_ssize_t j
    try:
        while True:
            for j in range(dim):
                acc[j] = 0.0
            for i in range(n_grams):
                h = _mix(_FNV_OFFSET, useed)
                h = _mix(h, salt)
                h = _mix(h, cps[i])
                h = _mix(h, cps[i + 1])
                h = _mix(h, cps[i + 2])
                if (h >> 63) & 1:
                    acc[h % <unsigned long long> dim] -= 1.0
                else:
                    acc[h % <unsigned long long> dim] += 1.0
            ss = 0.0
            for j in range(dim):
                ss += acc[j] * acc[j]
            if ss > 0.0:
                break
            salt += 1
        norm = sqrt(ss)
        return [acc[j] / norm for j in range(dim)]
    finally:
        free(cps)
        free(acc)


cdef class Index:
    """Dense row store supporting exact cosine scoring against a query."""

    cdef double* _mat
    cdef double* _norms
    cdef double* _qbuf
    cdef Py_ssize_t _n
    cdef Py_ssize_t _dim

    def __cinit__(self, vectors):
        self._mat = NULL
        self._norms = NULL
        self._qbuf = NULL
        cdef Py_ssize_t n = len(vectors)
        if n == 0:
            raise ValueError("vectors must be non-empty")
        cdef Py_ssize_t dim = len(vectors[0])
        if dim == 0:
            raise ValueError("vectors must have positive dimension")
        self._mat = <double*> malloc(n * dim * sizeof(double))
        self._norms = <double*> malloc(n * sizeof(double))
        self._qbuf = <double*> malloc(dim * sizeof(double))
        if self._mat == NULL or self._norms == NULL or self._qbuf == NULL:
            raise MemoryError()
        self._n = n
        self._dim = dim

        cdef Py_ssize_t i, j
        cdef double ss, x
        cdef object row
        for i in range(n):
            row = vectors[i]
            if len(row) != dim:
                raise ValueError(f"row {i} has dimension {len(row)}, expected {dim}")
            ss = 0.0
            for j in range(dim):
                x = <double> row[j]
                self._mat[i * dim + j] = x
                ss += x * x
            if ss == 0.0:
                raise ValueError(f"zero vector at row {i}")
            self._norms[i] = sqrt(ss)

    def __dealloc__(self):
        free(self._mat)
        free(self._norms)
        free(self._qbuf)

    @property
    def n(self):
        return self._n

    @property
    def dim(self):
        return self._dim

    cdef double _load_query(self, object query) except -1.0:
        cdef Py_ssize_t j
        cdef double ss = 0.0
        cdef double x
        if len(query) != self._dim:
            raise ValueError(f"query has dimension {len(query)}, expected {self._dim}")
        for j in range(self._dim):
            x = <double> query[j]
            self._qbuf[j] = x
            ss += x * x
        if ss == 0.0:
            raise ValueError("query is the zero vector")
        return sqrt(ss)

    cdef inline double _score_row(self, Py_ssize_t i, double q_norm) noexcept nogil:
        cdef Py_ssize_t j
        cdef double s = 0.0
        cdef double* row = self._mat + i * self._dim
        for j in range(self._dim):
            s += row[j] * self._qbuf[j]
        s = s / (self._norms[i] * q_norm)
        # Rounding can push identical vectors a last-place unit past 1;
        # a cosine is clamped to its mathematical range.
        if s > 1.0:
            s = 1.0
        elif s < -1.0:
            s = -1.0
        return s

    def score_all(self, query):
        """Cosine similarity of ``query`` against every row, in row order."""
        cdef double q_norm = self._load_query(query)
        cdef Py_ssize_t i
        return [self._score_row(i, q_norm) for i in range(self._n)]

    def top_k(self, query, int k):
        """The ``k`` best rows by cosine score, ties broken by row order."""
        if k <= 0:
            raise ValueError("k must be positive")
        cdef double q_norm = self._load_query(query)
        cdef Py_ssize_t i, m, pos, limit, j_move
        cdef double s

        cdef Py_ssize_t n = self._n
        if k >= n or k > 64:
            # Selection cost stops paying off for wide cuts; full sort instead.
            scores = [self._score_row(i, q_norm) for i in range(n)]
            order = sorted(range(n), key=lambda idx: (-scores[idx], idx))
            return [(i, scores[i]) for i in order[:k]]

        cdef double* best_s = <double*> malloc(k * sizeof(double))
        cdef Py_ssize_t* best_i = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
        if best_s == NULL or best_i == NULL:
            free(best_s)
            free(best_i)
            raise MemoryError()
        m = 0
        try:
            for i in range(n):
                s = self._score_row(i, q_norm)
                if m == k and s <= best_s[k - 1]:
                    # Ties keep the earlier row: rows arrive in ascending order.
                    continue
                pos = m if m < k else k - 1
                while pos > 0 and best_s[pos - 1] < s:
                    pos -= 1
                limit = m if m < k else k - 1
                for j_move in range(limit, pos, -1):
                    best_s[j_move] = best_s[j_move - 1]
                    best_i[j_move] = best_i[j_move - 1]
                best_s[pos] = s
                best_i[pos] = i
                if m < k:
                    m += 1
            return [(best_i[i], best_s[i]) for i in range(m)]
        finally:
            free(best_s)
            free(best_i)
