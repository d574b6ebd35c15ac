//! Word-level helpers for the dense bit tables used on hot paths.

pub(crate) const BITS: usize = 64;

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(BITS).max(1)
}

#[inline]
pub(crate) fn set(words: &mut [u64], bit: usize) {
    words[bit / BITS] |= 1u64 << (bit % BITS);
}

#[inline]
pub(crate) fn get(words: &[u64], bit: usize) -> bool {
    words[bit / BITS] & (1u64 << (bit % BITS)) != 0
}

#[inline]
pub(crate) fn is_subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

#[inline]
pub(crate) fn is_disjoint(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & y == 0)
}

#[inline]
pub(crate) fn union_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d |= s;
    }
}

pub(crate) fn count(words: &[u64]) -> usize {
    words.iter().map(|w| w.count_ones() as usize).sum()
}

pub(crate) fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(wi, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let tz = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(wi * BITS + tz)
        })
    })
}

/// Bits `0..len` set.
pub(crate) fn full(len: usize) -> Vec<u64> {
    let mut v = vec![0u64; words_for(len)];
    for b in 0..len {
        set(&mut v, b);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_round_trip() {
        let mut w = vec![0u64; 3];
        for b in [0, 5, 63, 64, 130] {
            set(&mut w, b);
        }
        assert_eq!(ones(&w).collect::<Vec<_>>(), vec![0, 5, 63, 64, 130]);
        assert_eq!(count(&w), 5);
        assert!(get(&w, 64));
        assert!(!get(&w, 65));
    }

    #[test]
    fn subset_and_disjoint() {
        let a = full(10);
        let mut b = vec![0u64; 1];
        set(&mut b, 3);
        assert!(is_subset(&b, &a));
        assert!(!is_subset(&a, &b));
        let mut c = vec![0u64; 1];
        set(&mut c, 11);
        assert!(is_disjoint(&a, &c));
    }
}
