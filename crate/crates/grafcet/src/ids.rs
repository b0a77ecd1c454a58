//! Identifier newtypes shared across the model, plus the natural ordering
//! they all use (digit runs compare numerically, so step "2" sorts before
//! step "12" the way situations are written).

use std::borrow::Cow;
use std::cmp::Ordering;
use std::fmt;

/// Compares two identifiers "naturally": maximal ASCII digit runs are
/// compared by numeric value, everything else bytewise. Ties between
/// numerically equal runs (e.g. `01` vs `1`) fall back to byte order so the
/// ordering stays total and consistent with equality.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        if a[i].is_ascii_digit() && b[j].is_ascii_digit() {
            let ra = digit_run(a, i);
            let rb = digit_run(b, j);
            let va = trim_zeros(&a[i..ra]);
            let vb = trim_zeros(&b[j..rb]);
            let numeric = va.len().cmp(&vb.len()).then_with(|| va.cmp(vb));
            if numeric != Ordering::Equal {
                return numeric;
            }
            let raw = a[i..ra].cmp(&b[j..rb]);
            if raw != Ordering::Equal {
                return raw;
            }
            i = ra;
            j = rb;
        } else {
            let byte = a[i].cmp(&b[j]);
            if byte != Ordering::Equal {
                return byte;
            }
            i += 1;
            j += 1;
        }
    }
    (a.len() - i).cmp(&(b.len() - j))
}

fn digit_run(s: &[u8], mut i: usize) -> usize {
    while i < s.len() && s[i].is_ascii_digit() {
        i += 1;
    }
    i
}

fn trim_zeros(run: &[u8]) -> &[u8] {
    let mut k = 0;
    while k + 1 < run.len() && run[k] == b'0' {
        k += 1;
    }
    &run[k..]
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl From<Cow<'_, str>> for $name {
            fn from(s: Cow<'_, str>) -> Self {
                Self(s.into_owned())
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                natural_cmp(&self.0, &other.0)
            }
        }
    };
}

id_type! {
    /// Identifier of a step (unique across the whole model).
    StepId
}
id_type! {
    /// Identifier of a transition (unique across the whole model).
    TransitionId
}
id_type! {
    /// Identifier of a partial Grafcet.
    PartialId
}
id_type! {
    /// Identifier of a declared variable.
    VarId
}
