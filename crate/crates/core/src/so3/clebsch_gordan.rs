use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::factorial;
use super::rotation::Rotation;
use super::wigner::wigner_d;

/// Complex-basis Clebsch-Gordan coefficient `⟨l1 m1; l2 m2 | l m⟩`
/// (Condon-Shortley convention) from the Racah closed-form sum.
pub fn complex_clebsch_gordan(l1: i64, m1: i64, l2: i64, m2: i64, l: i64, m: i64) -> f64 {
    if m1 + m2 != m
        || l < (l1 - l2).abs()
        || l > l1 + l2
        || m1.abs() > l1
        || m2.abs() > l2
        || m.abs() > l
    {
        return 0.0;
    }
    let f = factorial;
    let prefactor = ((2 * l + 1) as f64 * f(l + l1 - l2) * f(l - l1 + l2) * f(l1 + l2 - l)
        / f(l1 + l2 + l + 1))
    .sqrt()
        * (f(l + m) * f(l - m) * f(l1 - m1) * f(l1 + m1) * f(l2 - m2) * f(l2 + m2)).sqrt();

    let k_min = 0.max(l2 - l - m1).max(l1 - l + m2);
    let k_max = (l1 + l2 - l).min(l1 - m1).min(l2 + m2);
    let sum: f64 = (k_min..=k_max)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign / (f(k)
                * f(l1 + l2 - l - k)
                * f(l1 - m1 - k)
                * f(l2 + m2 - k)
                * f(l - l2 + m1 + k)
                * f(l - l1 - m2 + k))
        })
        .sum();
    prefactor * sum
}

/// Unitary map from complex to real harmonics of order `l`:
/// `Y_real[i] = Σ_j U[i][j] Y_complex[j]`, both indexed by `m + l`.
fn complex_to_real(l: usize) -> Vec<Vec<Complex64>> {
    let dim = 2 * l + 1;
    let li = l as i64;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    u[l][l] = Complex64::new(1.0, 0.0);
    for m in 1..=li {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let (pos, neg) = ((li + m) as usize, (li - m) as usize);
        u[pos][neg] = Complex64::new(h, 0.0);
        u[pos][pos] = Complex64::new(sign * h, 0.0);
        u[neg][neg] = Complex64::new(0.0, h);
        u[neg][pos] = Complex64::new(0.0, -sign * h);
    }
    u
}

/// One coupling block `C[m_o][m_f][m_i]` for `l_f ⊗ l_i → l_o`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgBlock {
    pub l_out: usize,
    pub l_filter: usize,
    pub l_in: usize,
    data: Vec<f64>,
}

impl CgBlock {
    pub fn shape(&self) -> [usize; 3] {
        [2 * self.l_out + 1, 2 * self.l_filter + 1, 2 * self.l_in + 1]
    }

    pub fn get(&self, mo: usize, mf: usize, mi: usize) -> f64 {
        let [_, df, di] = self.shape();
        self.data[(mo * df + mf) * di + mi]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Couples an order-`l_filter` vector with an order-`l_in` vector.
    pub fn couple(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let [dout, df, di] = self.shape();
        (0..dout)
            .map(|mo| {
                let mut acc = 0.0;
                for (mf, uf) in u.iter().enumerate().take(df) {
                    for (mi, vi) in v.iter().enumerate().take(di) {
                        acc += self.get(mo, mf, mi) * uf * vi;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Real-basis Clebsch-Gordan coefficients for every admissible
/// `(l_out, l_filter, l_in)` with each order at most `l_max`.
///
/// Built by conjugating the complex coefficients with the complex-to-real
/// change of basis. Triples with odd `l_out + l_filter + l_in` come out purely
/// imaginary and are multiplied by `-i`; the discarded part is tracked in
/// [`CgTable::max_imaginary_residue`].
#[derive(Clone, Debug)]
pub struct CgTable {
    l_max: usize,
    blocks: BTreeMap<(usize, usize, usize), CgBlock>,
    imag_residue: f64,
}

impl CgTable {
    pub fn new(l_max: usize) -> Self {
        let bases: Vec<_> = (0..=l_max).map(complex_to_real).collect();
        let mut blocks = BTreeMap::new();
        let mut imag_residue: f64 = 0.0;
        for lo in 0..=l_max {
            for lf in 0..=l_max {
                for li in 0..=l_max {
                    if lo < lf.abs_diff(li) || lo > lf + li {
                        continue;
                    }
                    let (block, residue) = real_block(lo, lf, li, &bases);
                    imag_residue = imag_residue.max(residue);
                    blocks.insert((lo, lf, li), block);
                }
            }
        }
        Self {
            l_max,
            blocks,
            imag_residue,
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// `None` outside the selection rule `|l_f − l_i| ≤ l_o ≤ l_f + l_i`.
    pub fn block(&self, l_out: usize, l_filter: usize, l_in: usize) -> Option<&CgBlock> {
        self.blocks.get(&(l_out, l_filter, l_in))
    }

    pub fn blocks(&self) -> impl Iterator<Item = &CgBlock> {
        self.blocks.values()
    }

    pub fn max_imaginary_residue(&self) -> f64 {
        self.imag_residue
    }

    /// Flat `(l_o, l_f, l_i, m_o, m_f, m_i, value)` records with `m` signed.
    pub fn records(&self) -> Vec<CgRecord> {
        let mut out = Vec::new();
        for b in self.blocks.values() {
            let [dout, df, di] = b.shape();
            for mo in 0..dout {
                for mf in 0..df {
                    for mi in 0..di {
                        out.push(CgRecord {
                            l_o: b.l_out,
                            l_f: b.l_filter,
                            l_i: b.l_in,
                            m_o: mo as i64 - b.l_out as i64,
                            m_f: mf as i64 - b.l_filter as i64,
                            m_i: mi as i64 - b.l_in as i64,
                            value: b.get(mo, mf, mi),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgRecord {
    pub l_o: usize,
    pub l_f: usize,
    pub l_i: usize,
    pub m_o: i64,
    pub m_f: i64,
    pub m_i: i64,
    pub value: f64,
}

fn real_block(lo: usize, lf: usize, li: usize, bases: &[Vec<Vec<Complex64>>]) -> (CgBlock, f64) {
    let (dout, df, di) = (2 * lo + 1, 2 * lf + 1, 2 * li + 1);
    let complex: Vec<f64> = (0..dout * df * di)
        .map(|idx| {
            let (mo, mf, mi) = (idx / (df * di), (idx / di) % df, idx % di);
            complex_clebsch_gordan(
                lf as i64,
                mf as i64 - lf as i64,
                li as i64,
                mi as i64 - li as i64,
                lo as i64,
                mo as i64 - lo as i64,
            )
        })
        .collect();
    let (uo, uf, ui) = (&bases[lo], &bases[lf], &bases[li]);
    let phase = if (lo + lf + li) % 2 == 0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(0.0, -1.0)
    };

    let mut data = vec![0.0; dout * df * di];
    let mut residue: f64 = 0.0;
    for ro in 0..dout {
        for rf in 0..df {
            for ri in 0..di {
                let mut acc = Complex64::new(0.0, 0.0);
                for co in 0..dout {
                    if uo[ro][co].norm_sqr() == 0.0 {
                        continue;
                    }
                    for cf in 0..df {
                        if uf[rf][cf].norm_sqr() == 0.0 {
                            continue;
                        }
                        for ci in 0..di {
                            let c = complex[(co * df + cf) * di + ci];
                            if c != 0.0 {
                                acc += uo[ro][co] * uf[rf][cf].conj() * ui[ri][ci].conj() * c;
                            }
                        }
                    }
                }
                let acc = acc * phase;
                residue = residue.max(acc.im.abs());
                data[(ro * df + rf) * di + ri] = acc.re;
            }
        }
    }
    (
        CgBlock {
            l_out: lo,
            l_filter: lf,
            l_in: li,
            data,
        },
        residue,
    )
}

/// Max-abs entry of `Σ C D^(l_f) D^(l_i) − D^(l_o) C` for one block.
pub fn cg_commutation_residual(block: &CgBlock, rotation: &Rotation) -> f64 {
    let [dout, df, di] = block.shape();
    let d_out = wigner_d(block.l_out, rotation);
    let d_f = wigner_d(block.l_filter, rotation);
    let d_i = wigner_d(block.l_in, rotation);
    let mut worst: f64 = 0.0;
    for mo in 0..dout {
        for mf in 0..df {
            for mi in 0..di {
                let mut lhs = 0.0;
                for pf in 0..df {
                    for pi in 0..di {
                        lhs += block.get(mo, pf, pi) * d_f.get(pf, mf) * d_i.get(pi, mi);
                    }
                }
                let rhs: f64 = (0..dout)
                    .map(|po| d_out.get(mo, po) * block.get(po, mf, mi))
                    .sum();
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    worst
}

/// Max-abs deviation of `Σ_{m_f, m_i} C^{(l, m)} C^{(l', m')}` from `δ_{ll'} δ_{mm'}`
/// over every pair of blocks sharing `(l_f, l_i)`.
pub fn cg_orthogonality_residual(table: &CgTable) -> f64 {
    let mut worst: f64 = 0.0;
    for a in table.blocks() {
        for b in table.blocks() {
            if (a.l_filter, a.l_in) != (b.l_filter, b.l_in) {
                continue;
            }
            let [da, df, di] = a.shape();
            let db = b.shape()[0];
            for ma in 0..da {
                for mb in 0..db {
                    let mut s = 0.0;
                    for mf in 0..df {
                        for mi in 0..di {
                            s += a.get(ma, mf, mi) * b.get(mb, mf, mi);
                        }
                    }
                    let target = if a.l_out == b.l_out && ma == mb { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
            }
        }
    }
    worst
}
