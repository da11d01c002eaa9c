use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque tenant identifier (ttid). Encoded as a non-negative integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TenantId(pub u32);

impl fmt::Display for TenantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for TenantId {
    fn from(v: u32) -> Self {
        TenantId(v)
    }
}

/// Access rights of the privilege matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Right {
    Read,
    Insert,
    Update,
    Delete,
    Grant,
    Revoke,
}

impl Right {
    pub const ALL: [Right; 6] = [
        Right::Read,
        Right::Insert,
        Right::Update,
        Right::Delete,
        Right::Grant,
        Right::Revoke,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Right::Read => "READ",
            Right::Insert => "INSERT",
            Right::Update => "UPDATE",
            Right::Delete => "DELETE",
            Right::Grant => "GRANT",
            Right::Revoke => "REVOKE",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Right> {
        Right::ALL
            .into_iter()
            .find(|r| r.keyword().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Right {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}
