//! Word width and κ-bit arithmetic, including the finite-field product.

use serde::{Deserialize, Serialize};

/// Word width κ in bits. Every program value lives in `0..2^κ`.
///
/// The library accepts any width in 1..=16; the CLI restricts itself to
/// the power-of-two widths users actually deploy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Width(u8);

/// Reduction polynomials for GF(2^κ), κ = 1..=16, index κ-1. Each entry is
/// the full polynomial including the x^κ term. Width 8 is the AES
/// polynomial x^8+x^4+x^3+x+1; the rest are the standard primitive
/// polynomials of minimal weight. A unit test checks irreducibility of
/// every entry by trial division.
const REDUCTION_POLYS: [u32; 16] = [
    0x3,     // x+1 (degenerate: GF(2) product is AND)
    0x7,     // x^2+x+1
    0xB,     // x^3+x+1
    0x13,    // x^4+x+1
    0x25,    // x^5+x^2+1
    0x43,    // x^6+x+1
    0x83,    // x^7+x+1
    0x11B,   // x^8+x^4+x^3+x+1 (AES)
    0x211,   // x^9+x^4+1
    0x409,   // x^10+x^3+1
    0x805,   // x^11+x^2+1
    0x1053,  // x^12+x^6+x^4+x+1
    0x201B,  // x^13+x^4+x^3+x+1
    0x4443,  // x^14+x^10+x^6+x+1
    0x8003,  // x^15+x+1
    0x1100B, // x^16+x^12+x^3+x+1
];

#[derive(Debug, thiserror::Error)]
#[error("unsupported word width {0}: must be in 1..=16")]
pub struct WidthError(pub u8);

impl Width {
    pub const W1: Width = Width(1);
    pub const W2: Width = Width(2);
    pub const W4: Width = Width(4);
    pub const W8: Width = Width(8);
    pub const W16: Width = Width(16);

    pub fn new(bits: u8) -> Result<Self, WidthError> {
        if (1..=16).contains(&bits) {
            Ok(Width(bits))
        } else {
            Err(WidthError(bits))
        }
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.0 as u32
    }

    /// |𝕀| = 2^κ.
    #[inline]
    pub fn domain_size(self) -> u32 {
        1u32 << self.0
    }

    #[inline]
    pub fn mask(self) -> u16 {
        (((1u32 << self.0) - 1) & 0xFFFF) as u16
    }

    /// All values of the word domain, ascending.
    pub fn domain(self) -> impl Iterator<Item = u16> {
        (0..self.domain_size()).map(|v| v as u16)
    }

    #[inline]
    pub fn truncate(self, v: u32) -> u16 {
        (v & self.mask() as u32) as u16
    }

    pub fn reduction_poly(self) -> u32 {
        REDUCTION_POLYS[(self.0 - 1) as usize]
    }

    /// Finite-field product in GF(2^κ): carry-less multiply then reduce by
    /// the width's polynomial. At κ=1 this degenerates to AND.
    pub fn gf_mul(self, a: u16, b: u16) -> u16 {
        let k = self.bits();
        let (a, b) = (a as u32, b as u32);
        let mut acc: u32 = 0;
        for i in 0..k {
            if (a >> i) & 1 == 1 {
                acc ^= b << i;
            }
        }
        let poly = self.reduction_poly();
        let mut bit = 2 * k;
        while bit > k {
            bit -= 1;
            if (acc >> bit) & 1 == 1 {
                acc ^= poly << (bit - k);
            }
        }
        self.truncate(acc)
    }

    #[inline]
    pub fn add(self, a: u16, b: u16) -> u16 {
        self.truncate(a as u32 + b as u32)
    }

    #[inline]
    pub fn sub(self, a: u16, b: u16) -> u16 {
        self.truncate((a as u32).wrapping_sub(b as u32))
    }

    #[inline]
    pub fn mul(self, a: u16, b: u16) -> u16 {
        self.truncate((a as u32).wrapping_mul(b as u32))
    }

    #[inline]
    pub fn not(self, a: u16) -> u16 {
        !a & self.mask()
    }

    /// Logical left shift within κ bits; shifts of κ or more yield 0.
    #[inline]
    pub fn shl(self, a: u16, amount: u32) -> u16 {
        if amount >= self.bits() {
            0
        } else {
            self.truncate((a as u32) << amount)
        }
    }

    #[inline]
    pub fn shr(self, a: u16, amount: u32) -> u16 {
        if amount >= self.bits() {
            0
        } else {
            a >> amount
        }
    }
}

impl std::fmt::Display for Width {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_degree(p: u64) -> u32 {
        63 - p.leading_zeros()
    }

    #[test]
    fn reduction_polys_are_irreducible() {
        for k in 1..=16u32 {
            let p = REDUCTION_POLYS[(k - 1) as usize] as u64;
            assert_eq!(poly_degree(p), k, "width {k} polynomial has wrong degree");
            // Trial division by every polynomial of degree 1..=k/2.
            for d in 1..=(k / 2).max(1) {
                if d >= k {
                    break;
                }
                for q in (1u64 << d)..(1u64 << (d + 1)) {
                    // Check whether q divides p: polynomial long division.
                    let mut rem = p;
                    while rem != 0 && poly_degree(rem) >= d {
                        let shift = poly_degree(rem) - d;
                        rem ^= q << shift;
                    }
                    assert!(
                        rem != 0 || q == p,
                        "width {k} polynomial {p:#x} divisible by {q:#x}"
                    );
                }
            }
        }
    }

    #[test]
    fn gf_mul_matches_log_table_oracle_at_width_8() {
        // Independent oracle: log/antilog tables over the generator 0x03,
        // the classic way GF(2^8) products are implemented in AES code.
        let w = Width::W8;
        let mut antilog = [0u16; 256];
        let mut log = [0u16; 256];
        let mut v: u16 = 1;
        for i in 0..255 {
            antilog[i] = v;
            log[v as usize] = i as u16;
            // multiply v by 0x03 = x+1 using shift-xor directly
            let hi = v & 0x80 != 0;
            let mut doubled = (v << 1) & 0xFF;
            if hi {
                doubled ^= 0x1B;
            }
            v = doubled ^ v;
        }
        let oracle = |a: u16, b: u16| -> u16 {
            if a == 0 || b == 0 {
                0
            } else {
                antilog[((log[a as usize] + log[b as usize]) % 255) as usize]
            }
        };
        for a in 0..256u16 {
            for b in 0..256u16 {
                assert_eq!(w.gf_mul(a, b), oracle(a, b), "a={a:#x} b={b:#x}");
            }
        }
        // The classic inverse pair.
        assert_eq!(w.gf_mul(0x53, 0xCA), 0x01);
    }

    #[test]
    fn gf_mul_is_a_field_at_small_widths() {
        // Every nonzero element must have an inverse; checks reduction at
        // widths the test corpus uses.
        for bits in [1u8, 2, 3, 4] {
            let w = Width::new(bits).unwrap();
            for a in 1..w.domain_size() as u16 {
                let mut found = false;
                for b in 0..w.domain_size() as u16 {
                    if w.gf_mul(a, b) == 1 {
                        found = true;
                        break;
                    }
                }
                assert!(found, "width {bits}: {a} has no inverse");
            }
        }
    }

    #[test]
    fn width_1_product_is_and() {
        let w = Width::W1;
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(w.gf_mul(a, b), a & b);
            }
        }
    }

    #[test]
    fn modular_arithmetic_wraps() {
        let w = Width::W8;
        assert_eq!(w.add(200, 100), 44);
        assert_eq!(w.sub(3, 5), 254);
        assert_eq!(w.mul(16, 16), 0);
        assert_eq!(w.not(0), 255);
        assert_eq!(w.shl(0x81, 1), 0x02);
        assert_eq!(w.shr(0x81, 1), 0x40);
        assert_eq!(w.shl(1, 8), 0);
        assert_eq!(w.shl(1, 9), 0);
    }
}
