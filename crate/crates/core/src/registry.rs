//! Parser for registry names such as `parallel(board,sequential(frontend,board))`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("malformed registry name {input:?}: {reason}")]
    Malformed { input: String, reason: String },
    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecExpr {
    pub name: String,
    pub args: Vec<SpecExpr>,
}

impl fmt::Display for SpecExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, arg) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{arg}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl SpecExpr {
    pub fn parse(input: &str) -> Result<SpecExpr, RegistryError> {
        let compact: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        let malformed = |reason: &str| RegistryError::Malformed {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let (expr, rest) = parse_expr(&compact).map_err(malformed)?;
        if !rest.is_empty() {
            return Err(malformed("trailing characters"));
        }
        Ok(expr)
    }
}

fn parse_expr(s: &str) -> Result<(SpecExpr, &str), &'static str> {
    let end = s
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(s.len());
    if end == 0 {
        return Err("expected a name");
    }
    let name = s[..end].to_string();
    let mut rest = &s[end..];
    let mut args = Vec::new();
    if let Some(inner) = rest.strip_prefix('(') {
        rest = inner;
        loop {
            let (arg, after) = parse_expr(rest)?;
            args.push(arg);
            if let Some(after) = after.strip_prefix(',') {
                rest = after;
            } else if let Some(after) = after.strip_prefix(')') {
                rest = after;
                break;
            } else {
                return Err("expected ',' or ')'");
            }
        }
    }
    Ok((SpecExpr { name, args }, rest))
}
