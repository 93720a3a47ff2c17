//! Lexicographic enumeration of finite product signal spaces.

/// Number of points in the product space, or `None` on overflow.
pub(crate) fn product_size(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Visits every assignment of the product space in lexicographic order
/// (last coordinate fastest). Summations that iterate through here are
/// bitwise-deterministic because the order is fixed.
pub(crate) fn for_each_lex(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        // odometer increment
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < dims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}
