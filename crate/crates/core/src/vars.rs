//! Program variables: identity, kind, and the name table.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Index into a [`VarTable`]. Cheap to copy; ordering follows creation
/// order, which analyses use as a deterministic tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub u32);

/// Input classification: what an adversary knows about a value a priori.
/// Assigned intermediates carry no kind (their distribution is the whole
/// question); fresh variables introduced by rewrites inherit the kind of
/// the variables they stand for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Known to the adversary (plaintext, tweak, round constant input).
    Public,
    /// Secret input; the verification target.
    Private,
    /// Fresh uniform randomness drawn by the masking scheme.
    Random,
}

impl VarKind {
    pub fn letter(self) -> char {
        match self {
            VarKind::Public => 'P',
            VarKind::Private => 'K',
            VarKind::Random => 'R',
        }
    }
}

/// How a variable came to exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarOrigin {
    Input,
    Intermediate,
    /// Fresh variable standing for the XOR of the listed same-kind
    /// variables, introduced by the cluster-collapse rewrite.
    Collapsed(Vec<VarId>),
    /// Fresh anchor introduced by constant assimilation during pattern
    /// normalization (stands for `original ∘ c`).
    Assimilated(VarId),
}

#[derive(Debug, Clone)]
struct VarEntry {
    name: String,
    kind: Option<VarKind>,
    origin: VarOrigin,
}

/// Interned variable table. Names are unique.
#[derive(Debug, Clone, Default)]
pub struct VarTable {
    entries: Vec<VarEntry>,
    by_name: BTreeMap<String, VarId>,
}

#[derive(Debug, thiserror::Error)]
pub enum VarTableError {
    #[error("variable `{0}` declared twice")]
    Duplicate(String),
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(
        &mut self,
        name: &str,
        kind: Option<VarKind>,
        origin: VarOrigin,
    ) -> Result<VarId, VarTableError> {
        if self.by_name.contains_key(name) {
            return Err(VarTableError::Duplicate(name.to_string()));
        }
        let id = VarId(self.entries.len() as u32);
        self.entries.push(VarEntry {
            name: name.to_string(),
            kind,
            origin,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Declare with a name made unique by appending `_2`, `_3`, ... if the
    /// base is taken. Used for SSA renames, inlining, and fresh variables.
    pub fn declare_fresh(&mut self, base: &str, kind: Option<VarKind>, origin: VarOrigin) -> VarId {
        if !self.by_name.contains_key(base) {
            return self.declare(base, kind, origin).expect("checked vacant");
        }
        let mut n = 2usize;
        loop {
            let candidate = format!("{base}_{n}");
            if !self.by_name.contains_key(&candidate) {
                return self
                    .declare(&candidate, kind, origin)
                    .expect("checked vacant");
            }
            n += 1;
        }
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.entries[id.0 as usize].name
    }

    /// Input kind; None for assigned intermediates.
    pub fn kind(&self, id: VarId) -> Option<VarKind> {
        self.entries[id.0 as usize].kind
    }

    /// Kind of a variable that can appear as an expression leaf. Panics on
    /// intermediates: computations unfold those, so a leaf occurrence is a
    /// construction bug.
    pub fn leaf_kind(&self, id: VarId) -> VarKind {
        self.entries[id.0 as usize]
            .kind
            .unwrap_or_else(|| panic!("intermediate `{}` used as expression leaf", self.name(id)))
    }

    pub fn origin(&self, id: VarId) -> &VarOrigin {
        &self.entries[id.0 as usize].origin
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.entries.len()).map(|i| VarId(i as u32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declare_and_lookup() {
        let mut t = VarTable::new();
        let k = t
            .declare("k", Some(VarKind::Private), VarOrigin::Input)
            .unwrap();
        let r = t
            .declare("r'", Some(VarKind::Random), VarOrigin::Input)
            .unwrap();
        assert_eq!(t.lookup("k"), Some(k));
        assert_eq!(t.lookup("r'"), Some(r));
        assert_eq!(t.name(r), "r'");
        assert_eq!(t.kind(k), Some(VarKind::Private));
        assert!(t
            .declare("k", Some(VarKind::Public), VarOrigin::Input)
            .is_err());
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let mut t = VarTable::new();
        t.declare("x", Some(VarKind::Random), VarOrigin::Input)
            .unwrap();
        t.declare("x_2", Some(VarKind::Random), VarOrigin::Input)
            .unwrap();
        let f = t.declare_fresh("x", Some(VarKind::Random), VarOrigin::Intermediate);
        assert_eq!(t.name(f), "x_3");
    }
}
