//! Small numerically stable helpers shared by the likelihood and selection code.

use crate::Scalar;

/// `log(sum(exp(v)))` with max subtraction. Returns `-inf` for an empty slice.
pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let Some(max) = v.iter().copied().reduce(|a, b| a.max(b)) else {
        return T::lit(f64::NEG_INFINITY);
    };
    if !max.is_finite() {
        return max;
    }
    let sum = v.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp());
    max + sum.ln()
}

/// Softmax of `v`, written into a new vector.
pub fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let lse = log_sum_exp(v);
    v.iter().map(|&x| (x - lse).exp()).collect()
}

/// Logistic function `1 / (1 + exp(-t))`, stable for large `|t|`.
pub fn sigmoid<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// `log(sigmoid(t))`.
pub fn log_sigmoid<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Shannon entropy in bits; zero-probability entries contribute nothing.
pub fn entropy_bits<T: Scalar>(p: &[T]) -> T {
    let ln2 = T::ln_2();
    p.iter()
        .filter(|&&x| x > T::zero())
        .fold(T::zero(), |acc, &x| acc - x * x.ln())
        / ln2
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    out
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}
