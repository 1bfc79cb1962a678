//! Hadamard matrices and balanced on/off Walsh code books.
//!
//! Orders of the form `s * 2^a` with `s` in {1, 12, 20} are built as the
//! Kronecker product of a seed matrix with Sylvester doublings. The order-12
//! and order-20 seeds come from the Paley type I construction over GF(11) and
//! GF(19), which is what makes code lengths like 320 and 1280 available.
//!
//! Row 0 of every matrix is the all-ones row. It is never handed out as a
//! code: it is unbalanced and would land on the DC term of the decoder.

use std::io::Write;

use crate::error::{Error, Result};

/// Seed orders combined with powers of two.
const SEEDS: [usize; 3] = [1, 12, 20];

/// Square matrix over {+1, -1} with mutually orthogonal rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HadamardMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl HadamardMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.entries[i * self.order + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.entries.chunks_exact(self.order)
    }

    fn kronecker(&self, other: &HadamardMatrix) -> HadamardMatrix {
        let order = self.order * other.order;
        let mut entries = vec![0i8; order * order];
        for (i, a) in self.rows().enumerate() {
            for (k, b) in other.rows().enumerate() {
                let row = i * other.order + k;
                let dst = &mut entries[row * order..(row + 1) * order];
                for (j, &x) in a.iter().enumerate() {
                    for (l, &y) in b.iter().enumerate() {
                        dst[j * other.order + l] = x * y;
                    }
                }
            }
        }
        HadamardMatrix { order, entries }
    }
}

/// Splits `order` into `(seed, power_of_two)` if it has a supported construction.
pub fn factor_order(order: usize) -> Option<(usize, u32)> {
    if order < 2 {
        return None;
    }
    SEEDS.iter().find_map(|&s| {
        if !order.is_multiple_of(s) {
            return None;
        }
        let rest = order / s;
        rest.is_power_of_two().then(|| (s, rest.trailing_zeros()))
    })
}

pub fn is_supported_order(order: usize) -> bool {
    factor_order(order).is_some()
}

/// Smallest supported Hadamard order that is `>= at_least`.
pub fn smallest_supported_order(at_least: usize) -> usize {
    let mut best = usize::MAX;
    for &s in &SEEDS {
        let mut n = s;
        while n < at_least.max(2) {
            n *= 2;
        }
        best = best.min(n);
    }
    best
}

/// Builds the Hadamard matrix of the requested order.
pub fn hadamard(order: usize) -> Result<HadamardMatrix> {
    let (seed, doublings) = factor_order(order).ok_or(Error::UnsupportedOrder(order))?;
    let mut h = match seed {
        1 => HadamardMatrix {
            order: 1,
            entries: vec![1],
        },
        q1 => paley_i(q1 - 1),
    };
    let base = HadamardMatrix {
        order: 2,
        entries: vec![1, 1, 1, -1],
    };
    for _ in 0..doublings {
        h = h.kronecker(&base);
    }
    Ok(h)
}

/// Legendre symbol of `a` modulo the odd prime `q`.
fn quadratic_character(a: usize, q: usize) -> i8 {
    let a = a % q;
    if a == 0 {
        return 0;
    }
    if (1..q).any(|x| x * x % q == a) {
        1
    } else {
        -1
    }
}

/// Paley type I construction, order `q + 1` for a prime `q = 3 (mod 4)`.
///
/// With the Jacobsthal matrix `Q[i][j] = chi(j - i)` and
/// `S = [[0, 1^T], [-1, Q]]`, the matrix `I + S` is Hadamard and already has
/// an all-ones first row.
fn paley_i(q: usize) -> HadamardMatrix {
    debug_assert_eq!(q % 4, 3);
    let order = q + 1;
    let mut entries = vec![0i8; order * order];
    for i in 0..order {
        for j in 0..order {
            let s = match (i, j) {
                (0, 0) => 0,
                (0, _) => 1,
                (_, 0) => -1,
                _ => quadratic_character(j + q - i, q),
            };
            entries[i * order + j] = s + i8::from(i == j);
        }
    }
    HadamardMatrix { order, entries }
}

/// Ordered set of balanced binary codes of common length `W`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeBook {
    length: usize,
    bits: Vec<u8>,
    source_rows: Vec<usize>,
}

impl CodeBook {
    /// Code length `W`.
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.source_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_rows.is_empty()
    }

    pub fn code(&self, j: usize) -> &[u8] {
        &self.bits[j * self.length..(j + 1) * self.length]
    }

    pub fn bit(&self, j: usize, w: usize) -> u8 {
        self.bits[j * self.length + w]
    }

    pub fn codes(&self) -> impl Iterator<Item = &[u8]> {
        self.bits.chunks_exact(self.length)
    }

    /// Hadamard row each code was taken from.
    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    /// Reorders the codes; `order[j]` is the current index that becomes code `j`.
    pub fn permuted(&self, order: &[usize]) -> CodeBook {
        assert_eq!(order.len(), self.len());
        let mut bits = Vec::with_capacity(self.bits.len());
        let mut source_rows = Vec::with_capacity(order.len());
        for &j in order {
            bits.extend_from_slice(self.code(j));
            source_rows.push(self.source_rows[j]);
        }
        CodeBook {
            length: self.length,
            bits,
            source_rows,
        }
    }

    /// One code per line, bits as `0`/`1` separated by commas.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for code in self.codes() {
            let line: Vec<&str> = code
                .iter()
                .map(|&b| if b == 1 { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Builds `num_codes` balanced codes from rows `1..=num_codes` of the smallest
/// Hadamard matrix of order `>= num_codes + 1` (or `min_length`, if larger).
pub fn codebook(num_codes: usize, min_length: Option<usize>) -> Result<CodeBook> {
    if num_codes == 0 {
        return Err(Error::Invalid("a code book needs at least one code".into()));
    }
    let mut length = smallest_supported_order(num_codes + 1);
    if let Some(min) = min_length {
        if !is_supported_order(min) {
            return Err(Error::UnsupportedOrder(min));
        }
        length = length.max(min);
    }
    let h = hadamard(length)?;
    let mut bits = Vec::with_capacity(num_codes * length);
    for row in 1..=num_codes {
        bits.extend(h.row(row).iter().map(|&x| u8::from(x > 0)));
    }
    Ok(CodeBook {
        length,
        bits,
        source_rows: (1..=num_codes).collect(),
    })
}

/// Maps on/off bits to the +1/-1 correlation kernel.
pub fn bipolar(code: &[u8]) -> Vec<i8> {
    code.iter().map(|&b| 2 * b as i8 - 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Packs rows into bitsets so orthogonality is checked without reusing
    /// the construction's arithmetic: <a, b> = W - 2 * popcount(a ^ b).
    fn gram_is_scaled_identity(h: &HadamardMatrix) -> bool {
        let w = h.order();
        let words = w.div_ceil(64);
        let packed: Vec<Vec<u64>> = h
            .rows()
            .map(|r| {
                let mut v = vec![0u64; words];
                for (j, &x) in r.iter().enumerate() {
                    if x < 0 {
                        v[j / 64] |= 1 << (j % 64);
                    }
                }
                v
            })
            .collect();
        for a in 0..w {
            for b in a..w {
                let diff: u32 = packed[a]
                    .iter()
                    .zip(&packed[b])
                    .map(|(x, y)| (x ^ y).count_ones())
                    .sum();
                let dot = w as i64 - 2 * diff as i64;
                let expected = if a == b { w as i64 } else { 0 };
                if dot != expected {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn order_two_is_sylvester_base() {
        let h = hadamard(2).unwrap();
        assert_eq!(h.row(0), &[1, 1]);
        assert_eq!(h.row(1), &[1, -1]);
    }

    #[test]
    fn order_four_product_is_scaled_identity() {
        let h = hadamard(4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: i32 = (0..4).map(|k| (h.get(i, k) * h.get(j, k)) as i32).sum();
                assert_eq!(dot, if i == j { 4 } else { 0 });
            }
        }
    }

    #[test]
    fn order_320_is_hadamard() {
        let h = hadamard(320).unwrap();
        // Direct integer product for this one order, bitset check for the rest.
        for i in 0..320 {
            for j in 0..320 {
                let dot: i32 = h
                    .row(i)
                    .iter()
                    .zip(h.row(j))
                    .map(|(&a, &b)| (a * b) as i32)
                    .sum();
                assert_eq!(dot, if i == j { 320 } else { 0 }, "rows {i},{j}");
            }
        }
    }

    #[test]
    fn every_supported_order_up_to_1280() {
        let orders: Vec<usize> = (2..=1280).filter(|&n| is_supported_order(n)).collect();
        assert!(orders.contains(&1280) && orders.contains(&12) && orders.contains(&20));
        for n in orders {
            let h = hadamard(n).unwrap();
            assert!(gram_is_scaled_identity(&h), "order {n}");
            assert!(h.row(0).iter().all(|&x| x == 1));
            for r in h.rows().skip(1) {
                assert_eq!(r.iter().map(|&x| x as i32).sum::<i32>(), 0);
            }
        }
    }

    #[test]
    fn unsupported_orders() {
        for n in [0, 1, 3, 6, 10, 28, 36, 100, 1000] {
            assert!(matches!(hadamard(n), Err(Error::UnsupportedOrder(m)) if m == n));
        }
    }

    #[test]
    fn codebook_sizes() {
        assert_eq!(codebook(255, None).unwrap().length(), 256);
        assert_eq!(codebook(319, None).unwrap().length(), 320);
        assert_eq!(codebook(480, None).unwrap().length(), 512);
        assert_eq!(codebook(1276, None).unwrap().length(), 1280);
        let one = codebook(1, None).unwrap();
        assert_eq!(one.length(), 2);
        assert_eq!(one.code(0), &[1, 0]);
        assert_eq!(codebook(3, Some(32)).unwrap().length(), 32);
        assert!(matches!(
            codebook(3, Some(36)),
            Err(Error::UnsupportedOrder(36))
        ));
        assert!(codebook(0, None).is_err());
    }

    #[test]
    fn bipolar_mapping() {
        assert_eq!(bipolar(&[1, 0, 0, 1]), vec![1, -1, -1, 1]);
        assert_eq!(bipolar(&[1, 1, 1]), vec![1, 1, 1]);
    }

    #[test]
    fn codebook_gram_matrix() {
        for j in [1usize, 5, 11, 19, 47, 63, 100] {
            let book = codebook(j, None).unwrap();
            let w = book.length();
            assert!(w > j);
            for a in 0..j {
                let ca = book.code(a);
                assert_eq!(ca.iter().filter(|&&b| b == 1).count(), w / 2);
                assert_eq!(bipolar(ca).iter().map(|&x| x as i32).sum::<i32>(), 0);
                for b in 0..j {
                    let kb = bipolar(book.code(b));
                    let g: i32 = ca.iter().zip(&kb).map(|(&c, &k)| c as i32 * k as i32).sum();
                    assert_eq!(g, if a == b { (w / 2) as i32 } else { 0 });
                }
            }
        }
    }

    #[test]
    fn csv_export() {
        let book = codebook(3, None).unwrap();
        let mut buf = Vec::new();
        book.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "1,0,1,0");
    }

    #[test]
    fn smallest_orders() {
        assert_eq!(smallest_supported_order(1), 2);
        assert_eq!(smallest_supported_order(17), 20);
        assert_eq!(smallest_supported_order(97), 128);
        assert_eq!(smallest_supported_order(253), 256);
        assert_eq!(smallest_supported_order(1025), 1280);
    }
}
