use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";

/// Datatype tags for literal values.
///
/// Widening lattice used when reconciling attributes:
/// `integer ⊑ decimal ⊑ string`, `date ⊑ string`, `boolean ⊑ string`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    String,
    Integer,
    Decimal,
    Date,
    Boolean,
}

impl Datatype {
    pub const ALL: [Datatype; 5] = [
        Datatype::String,
        Datatype::Integer,
        Datatype::Decimal,
        Datatype::Date,
        Datatype::Boolean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Datatype::String => "string",
            Datatype::Integer => "integer",
            Datatype::Decimal => "decimal",
            Datatype::Date => "date",
            Datatype::Boolean => "boolean",
        }
    }

    pub fn xsd_iri(self) -> String {
        format!("{XSD_NS}{}", self.as_str())
    }

    pub fn from_xsd_iri(iri: &str) -> Option<Datatype> {
        iri.strip_prefix(XSD_NS)?.parse().ok()
    }

    /// Whether `lexical` is a valid lexical form of this datatype.
    pub fn accepts(self, lexical: &str) -> bool {
        match self {
            Datatype::String => true,
            Datatype::Integer => is_integer(lexical),
            Datatype::Decimal => is_decimal(lexical),
            Datatype::Date => is_date(lexical),
            Datatype::Boolean => lexical == "true" || lexical == "false",
        }
    }

    /// Tag for an untyped literal: integer, decimal, date, boolean, string;
    /// the first lexical match wins.
    pub fn infer(lexical: &str) -> Datatype {
        [
            Datatype::Integer,
            Datatype::Decimal,
            Datatype::Date,
            Datatype::Boolean,
        ]
        .into_iter()
        .find(|dt| dt.accepts(lexical))
        .unwrap_or(Datatype::String)
    }

    fn parent(self) -> Option<Datatype> {
        match self {
            Datatype::Integer => Some(Datatype::Decimal),
            Datatype::String => None,
            _ => Some(Datatype::String),
        }
    }

    pub fn is_subtype_of(self, other: Datatype) -> bool {
        let mut cur = Some(self);
        while let Some(dt) = cur {
            if dt == other {
                return true;
            }
            cur = dt.parent();
        }
        false
    }

    /// Least upper bound in the widening lattice. Total: `string` is top.
    pub fn join(self, other: Datatype) -> Datatype {
        let mut cur = Some(self);
        while let Some(dt) = cur {
            if other.is_subtype_of(dt) {
                return dt;
            }
            cur = dt.parent();
        }
        Datatype::String
    }
}

fn is_integer(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn is_decimal(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    (!int.is_empty() || !frac.is_empty()) && all_digits(int) && all_digits(frac)
}

fn is_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
        && NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

impl FromStr for Datatype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Datatype::ALL
            .into_iter()
            .find(|dt| dt.as_str() == s)
            .ok_or_else(|| format!("unknown datatype tag {s:?}"))
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
