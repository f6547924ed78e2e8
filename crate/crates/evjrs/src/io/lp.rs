//! CPLEX LP text export. Columns are named by [`VarKey::name`], rows by
//! [`Tag::name`]; numbers use Rust's shortest round-trip formatting, so the
//! file reproduces the model bit for bit.
//!
//! [`VarKey::name`]: evjrs_core::mip::VarKey::name
//! [`Tag::name`]: evjrs_core::mip::Tag::name

use std::fmt::Write;

use evjrs_core::mip::{MipModel, Sense};

fn term(out: &mut String, coef: f64, name: &str) {
    let sign = if coef < 0.0 { '-' } else { '+' };
    let _ = write!(out, " {sign} {:?} {name}", coef.abs());
}

pub fn render_lp(model: &MipModel) -> String {
    let names: Vec<String> = model.index.keys().iter().map(|k| k.name()).collect();
    let mut out = String::from("\\ evjrs model\nMinimize\n obj:");
    let mut any = false;
    for (c, &v) in model.objective.iter().enumerate() {
        if v != 0.0 {
            term(&mut out, v, &names[c]);
            any = true;
        }
    }
    if !any {
        let _ = write!(
            out,
            " 0 {}",
            names.first().map(String::as_str).unwrap_or("x")
        );
    }
    out.push_str("\nSubject To\n");
    for row in &model.rows {
        let _ = write!(out, " {}:", row.tag.name());
        if row.coefs.is_empty() {
            let _ = write!(out, " 0 {}", names[0]);
        }
        for &(c, a) in &row.coefs {
            term(&mut out, a, &names[c]);
        }
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {:?}", row.rhs);
    }
    out.push_str("Bounds\n");
    for c in 0..model.n_cols() {
        let (lo, hi) = (model.lower[c], model.upper[c]);
        let bound = |v: f64| {
            if v == f64::INFINITY {
                String::from("+inf")
            } else if v == f64::NEG_INFINITY {
                String::from("-inf")
            } else {
                format!("{v:?}")
            }
        };
        if lo == hi {
            let _ = writeln!(out, " {} = {}", names[c], bound(lo));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", bound(lo), names[c], bound(hi));
        }
    }
    out.push_str("Binaries\n");
    for c in model.binary_cols() {
        let _ = writeln!(out, " {}", names[c]);
    }
    out.push_str("End\n");
    out
}
