//! JSON system description: `{"n","m","p","f","g","h","k"?,"fields"?}`.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::{parse_expression, Expr};
use crate::error::{Error, Result};

/// Parsed and dimension-checked system description.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub f: Vec<Expr>,
    /// Row-major, `n` rows by `m` columns.
    pub g: Vec<Expr>,
    pub h: Vec<Expr>,
    pub k: Option<Vec<Expr>>,
    /// Optional candidate matrix fields keyed by name (`P`, `Q`, `R`), row-major n×n.
    pub fields: BTreeMap<String, Vec<Expr>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    n: usize,
    m: usize,
    p: usize,
    f: Vec<String>,
    g: Vec<Vec<String>>,
    h: Vec<String>,
    #[serde(default)]
    k: Option<Vec<String>>,
    #[serde(default)]
    fields: BTreeMap<String, Vec<Vec<String>>>,
}

const FIELD_NAMES: [&str; 3] = ["P", "Q", "R"];

fn parse_all<'a>(
    what: &str,
    texts: impl IntoIterator<Item = &'a String>,
    n: usize,
) -> Result<Vec<Expr>> {
    texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            let expr = parse_expression(text)
                .map_err(|e| Error::Spec(format!("{what}[{i}] `{text}`: {e}")))?;
            if expr.arity() > n {
                return Err(Error::Spec(format!(
                    "{what}[{i}] `{text}` references x{} but n = {n}",
                    expr.arity()
                )));
            }
            Ok(expr)
        })
        .collect()
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "{what} has {got} entries, expected {want}"
        )));
    }
    Ok(())
}

pub fn parse_system_spec(document: &str) -> Result<SystemSpec> {
    let raw: RawSpec = serde_json::from_str(document).map_err(|e| Error::Spec(e.to_string()))?;
    let n = raw.n;
    if n == 0 {
        return Err(Error::Spec("n must be positive".into()));
    }

    check_len("f", raw.f.len(), n)?;
    check_len("g (rows)", raw.g.len(), n)?;
    for (i, row) in raw.g.iter().enumerate() {
        check_len(&format!("g row {i}"), row.len(), raw.m)?;
    }
    check_len("h", raw.h.len(), raw.p)?;
    if let Some(k) = &raw.k {
        check_len("k", k.len(), raw.m)?;
    }

    let f = parse_all("f", &raw.f, n)?;
    let g = parse_all("g", raw.g.iter().flatten(), n)?;
    let h = parse_all("h", &raw.h, n)?;
    let k = raw.k.as_ref().map(|k| parse_all("k", k, n)).transpose()?;

    let mut fields = BTreeMap::new();
    for (name, grid) in &raw.fields {
        if !FIELD_NAMES.contains(&name.as_str()) {
            return Err(Error::Spec(format!(
                "unknown field `{name}` (expected P, Q or R)"
            )));
        }
        check_len(&format!("fields.{name} (rows)"), grid.len(), n)?;
        for (i, row) in grid.iter().enumerate() {
            check_len(&format!("fields.{name} row {i}"), row.len(), n)?;
        }
        fields.insert(name.clone(), parse_all(name, grid.iter().flatten(), n)?);
    }

    Ok(SystemSpec {
        n,
        m: raw.m,
        p: raw.p,
        f,
        g,
        h,
        k,
        fields,
    })
}
