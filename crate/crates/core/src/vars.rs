//! Variable labels for estimator slots.
//!
//! A [`Var`] is an index into a [`VarSet`]. The declaration order of the
//! variables defines their ordering everywhere (canonical forms, matrix
//! row/column order, display), so `x, y, z, w` sort the way they were
//! declared rather than alphabetically.

use serde::{Deserialize, Serialize};

/// A variable label, identified by its declaration index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An ordered set of named variables.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct VarSet {
    names: Vec<String>,
}

impl VarSet {
    pub fn new() -> Self {
        Self { names: Vec::new() }
    }

    /// Builds a set from names in declaration order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        let mut set = Self::new();
        for n in names {
            set.intern(n.as_ref());
        }
        set
    }

    /// Returns the variable with the given name, declaring it if new.
    pub fn intern(&mut self, name: &str) -> Var {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            Var(i as u32)
        } else {
            self.names.push(name.to_string());
            Var((self.names.len() - 1) as u32)
        }
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| Var(i as u32))
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.names.len()).map(|i| Var(i as u32))
    }
}
