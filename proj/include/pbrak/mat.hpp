#pragma once

#include <cstddef>
#include <vector>

// Small dense row-major matrices. Sizes here are 2N x 2N with N the number
// of degrees of freedom, so everything is kept simple and allocation-light;
// products go through the kernels layer.

namespace pbrak {

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Mat identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(double s, const Mat& a);

// Max absolute row sum.
double inf_norm(const Mat& a);
double one_norm(const Mat& a);

// Left-multiply by the symplectic unit J = [[0, I], [-I, 0]] without
// forming J; a must be square of even dimension.
Mat j_times(const Mat& a);
// a * J.
Mat times_j(const Mat& a);

// The 2n x 2n symplectic unit itself.
Mat symplectic_unit(std::size_t two_n);

// ||M^T J M - J||_inf; zero for an exactly symplectic map.
double symplectic_defect(const Mat& m);

// Solve a x = b (b may have multiple columns) by LU with partial pivoting.
// Throws DomainEvalError on a singular matrix.
Mat lu_solve(Mat a, Mat b);

// Matrix exponential by scaling and squaring with a degree-13 Pade
// approximant.
Mat expm(const Mat& a);

}  // namespace pbrak
