//! SDPA sparse (`.dat-s`) export.
//!
//! The SDPA form is `min cᵀx  s.t.  Σ_k x_k F_k - F_0 ⪰ 0`. Equalities become
//! pairs of rows in one diagonal (LP) block; each norm bound becomes an arrow
//! matrix `[[r, vᵀ], [v, r I]]`.

use std::fmt::Write as _;
use std::path::Path;

use super::SdpProblem;
use crate::error::{Error, Result};

pub fn to_sdpa(p: &SdpProblem) -> String {
    // (block, i, j, var) entries with var = 0 for F_0; 1-based indices.
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let mut sizes: Vec<i64> = Vec::new();

    if !p.equalities.is_empty() {
        let blk = sizes.len() + 1;
        sizes.push(-(2 * p.equalities.len() as i64));
        for (r, e) in p.equalities.iter().enumerate() {
            let (lo, hi) = (2 * r + 1, 2 * r + 2);
            for &(k, a) in &e.coeffs {
                entries.push((k + 1, blk, lo, lo, a));
                entries.push((k + 1, blk, hi, hi, -a));
            }
            entries.push((0, blk, lo, lo, e.rhs));
            entries.push((0, blk, hi, hi, -e.rhs));
        }
    }

    for nb in &p.norm_bounds {
        let blk = sizes.len() + 1;
        let dim = nb.entries.len() + 1;
        sizes.push(dim as i64);
        for i in 1..=dim {
            entries.push((0, blk, i, i, -nb.radius));
        }
        for (i, &(k, w)) in nb.entries.iter().enumerate() {
            entries.push((k + 1, blk, 1, i + 2, w));
        }
    }

    for c in &p.psd {
        let blk = sizes.len() + 1;
        sizes.push(c.dim as i64);
        for i in 0..c.dim {
            for j in i..c.dim {
                let v = c.constant[(i, j)];
                if v != 0.0 {
                    entries.push((0, blk, i + 1, j + 1, -v));
                }
            }
        }
        for (&(i, j, k), &v) in &c.terms {
            entries.push((k + 1, blk, i + 1, j + 1, v));
        }
    }

    entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    let mut merged: Vec<(usize, usize, usize, usize, f64)> = Vec::with_capacity(entries.len());
    for e in entries {
        match merged.last_mut() {
            Some(l) if (l.0, l.1, l.2, l.3) == (e.0, e.1, e.2, e.3) => l.4 += e.4,
            _ => merged.push(e),
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "\"lqioc inverse problem: {} variables\"", p.num_vars);
    let _ = writeln!(out, "{}", p.num_vars);
    let _ = writeln!(out, "{}", sizes.len());
    let _ = writeln!(out, "{}", sizes.iter().map(i64::to_string).collect::<Vec<_>>().join(" "));
    let _ = writeln!(out, "{}", p.objective.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" "));
    for (k, blk, i, j, v) in merged {
        if v != 0.0 {
            let _ = writeln!(out, "{k} {blk} {i} {j} {v:e}");
        }
    }
    out
}

pub fn write_sdpa(p: &SdpProblem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_sdpa(p)).map_err(|e| Error::io(path, e))
}
