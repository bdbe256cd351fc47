#include "pbrak/mat.hpp"

#include <cassert>
#include <cmath>
#include <cstdlib>

#include "pbrak/errors.hpp"
#include "pbrak/kernels.hpp"

namespace pbrak {

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat matmul(const Mat& a, const Mat& b) {
    assert(a.cols() == b.rows());
    Mat c(a.rows(), b.cols());
    kernels::matmul(c.data(), a.data(), b.data(), a.rows(), a.cols(), b.cols());
    return c;
}

Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Mat operator+(const Mat& a, const Mat& b) {
    assert(a.rows() == b.rows() && a.cols() == b.cols());
    Mat c = a;
    kernels::axpy(1.0, b.data(), c.data(), a.rows() * a.cols());
    return c;
}

Mat operator-(const Mat& a, const Mat& b) {
    assert(a.rows() == b.rows() && a.cols() == b.cols());
    Mat c = a;
    kernels::axpy(-1.0, b.data(), c.data(), a.rows() * a.cols());
    return c;
}

Mat operator*(double s, const Mat& a) {
    Mat c(a.rows(), a.cols());
    kernels::scale_add(c.data(), c.data(), s, a.data(), a.rows() * a.cols());
    return c;
}

double inf_norm(const Mat& a) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += std::abs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

double one_norm(const Mat& a) {
    double best = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) s += std::abs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

Mat j_times(const Mat& a) {
    assert(a.rows() % 2 == 0);
    const std::size_t n = a.rows() / 2;
    Mat r(a.rows(), a.cols());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            r(i, j) = a(n + i, j);
            r(n + i, j) = -a(i, j);
        }
    return r;
}

Mat times_j(const Mat& a) {
    assert(a.cols() % 2 == 0);
    const std::size_t n = a.cols() / 2;
    Mat r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) {
            r(i, j) = -a(i, n + j);
            r(i, n + j) = a(i, j);
        }
    return r;
}

Mat symplectic_unit(std::size_t two_n) {
    return j_times(Mat::identity(two_n));
}

double symplectic_defect(const Mat& m) {
    Mat jm = j_times(m);
    Mat mtjm = matmul(transpose(m), jm);
    return inf_norm(mtjm - symplectic_unit(m.rows()));
}

Mat lu_solve(Mat a, Mat b) {
    assert(a.rows() == a.cols() && a.rows() == b.rows());
    const std::size_t n = a.rows();
    std::vector<std::size_t> piv(n);
    for (std::size_t i = 0; i < n; ++i) piv[i] = i;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t best = col;
        double mag = std::abs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > mag) {
                mag = std::abs(a(r, col));
                best = r;
            }
        }
        if (mag == 0.0) throw DomainEvalError("singular matrix in lu_solve");
        if (best != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(best, j));
            for (std::size_t j = 0; j < b.cols(); ++j) std::swap(b(col, j), b(best, j));
        }
        const double inv = 1.0 / a(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) * inv;
            if (f == 0.0) continue;
            a(r, col) = 0.0;
            for (std::size_t j = col + 1; j < n; ++j) a(r, j) -= f * a(col, j);
            for (std::size_t j = 0; j < b.cols(); ++j) b(r, j) -= f * b(col, j);
        }
    }
    // back substitution
    for (std::size_t col = n; col-- > 0;) {
        const double inv = 1.0 / a(col, col);
        for (std::size_t j = 0; j < b.cols(); ++j) b(col, j) *= inv;
        for (std::size_t r = 0; r < col; ++r) {
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) b(r, j) -= f * b(col, j);
        }
    }
    return b;
}

Mat expm(const Mat& a) {
    assert(a.rows() == a.cols());
    const std::size_t n = a.rows();
    // Higham's degree-13 Pade coefficients.
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    const double theta13 = 5.371920351148152;

    double nrm = one_norm(a);
    int squarings = 0;
    Mat as = a;
    if (nrm > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
        as = std::ldexp(1.0, -squarings) * a;
    }

    const Mat ident = Mat::identity(n);
    const Mat a2 = matmul(as, as);
    const Mat a4 = matmul(a2, a2);
    const Mat a6 = matmul(a4, a2);

    Mat u_inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
    Mat u = matmul(as, matmul(a6, u_inner) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
    Mat v_inner = b[12] * a6 + b[10] * a4 + b[8] * a2;
    Mat v = matmul(a6, v_inner) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;

    Mat f = lu_solve(v - u, u + v);
    for (int s = 0; s < squarings; ++s) f = matmul(f, f);
    return f;
}

}  // namespace pbrak
