//! Comma-separated tables.
//!
//! Gap tables have columns `l,j,states,W,env,lemma0_lhs,lemma0_rhs,pass`;
//! the last three are empty on rows that carry no lemma comparison. Tables
//! written from a lemma report list, for each `(l, j)`, the bulk row and then
//! the environment row.

use std::io::Write;

use crate::spectral::GapRow;

pub const GAP_HEADER: &str = "l,j,states,W,env,lemma0_lhs,lemma0_rhs,pass";

#[derive(Debug, Clone, PartialEq)]
pub struct GapCsvRow {
    pub l: usize,
    pub j: u32,
    pub states: usize,
    pub w: f64,
    pub env: bool,
    pub lemma: Option<(f64, f64, bool)>,
}

impl GapCsvRow {
    /// The bulk row `W(l, j)` and the environment row carrying the lemma
    /// comparison.
    pub fn pair_from_lemma(r: &GapRow) -> [Self; 2] {
        [Self { l: r.l, j: r.j, states: r.states, w: r.w, env: false, lemma: None }, Self::from_lemma(r)]
    }

    /// The environment row of a lemma comparison.
    pub fn from_lemma(r: &GapRow) -> Self {
        Self {
            l: r.l,
            j: r.j,
            states: r.env_states,
            w: r.w_env,
            env: true,
            lemma: Some((r.lemma0_lhs, r.lemma0_rhs, r.pass)),
        }
    }
}

/// Parses a table written by [`write_gap_csv`].
pub fn read_gap_csv(text: &str) -> Result<Vec<GapCsvRow>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(GAP_HEADER) {
        return Err(format!("missing header {GAP_HEADER}"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| format!("line {}: bad {what} in {line:?}", i + 2);
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 8 {
                return Err(bad("column count"));
            }
            let lemma = match (f[5], f[6], f[7]) {
                ("", "", "") => None,
                (a, b, c) => Some((
                    a.parse().map_err(|_| bad("lemma0_lhs"))?,
                    b.parse().map_err(|_| bad("lemma0_rhs"))?,
                    c.parse().map_err(|_| bad("pass"))?,
                )),
            };
            Ok(GapCsvRow {
                l: f[0].parse().map_err(|_| bad("l"))?,
                j: f[1].parse().map_err(|_| bad("j"))?,
                states: f[2].parse().map_err(|_| bad("states"))?,
                w: f[3].parse().map_err(|_| bad("W"))?,
                env: f[4].parse().map_err(|_| bad("env"))?,
                lemma,
            })
        })
        .collect()
}

pub fn write_gap_csv<W: Write>(mut out: W, rows: &[GapCsvRow]) -> std::io::Result<()> {
    writeln!(out, "{GAP_HEADER}")?;
    for r in rows {
        write!(out, "{},{},{},{:e},{}", r.l, r.j, r.states, r.w, r.env)?;
        match r.lemma {
            Some((lhs, rhs, pass)) => writeln!(out, ",{lhs:e},{rhs:e},{pass}")?,
            None => writeln!(out, ",,,")?,
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_table_layout() {
        let rows = [
            GapCsvRow { l: 1, j: 1, states: 3, w: 2.0, env: false, lemma: None },
            GapCsvRow { l: 1, j: 2, states: 3, w: 2.0, env: true, lemma: Some((2.0, 8.0, true)) },
        ];
        let mut buf = Vec::new();
        write_gap_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], GAP_HEADER);
        assert_eq!(lines[1], "1,1,3,2e0,false,,,");
        assert_eq!(lines[2], "1,2,3,2e0,true,2e0,8e0,true");
        assert_eq!(read_gap_csv(&text).unwrap(), rows);
        assert!(read_gap_csv("l,j\n").is_err());
        assert!(read_gap_csv(&format!("{GAP_HEADER}\n1,2,3,x,true,,,\n")).is_err());
    }
}
