use serde::Serialize;

/// Worst-case witness attached to a verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Vertex { vertex: String },
    Pair { a: String, b: String },
    Curve { vertices: Vec<String> },
    Set { vertices: Vec<String> },
    Family { label: String },
    Note { text: String },
}

/// Pass/fail verdict with a tight constant estimate and a worst-case witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub name: String,
    pub pass: bool,
    /// Tight estimate of the certified constant; `None` when not applicable.
    /// Infinite values serialize as `null`.
    pub constant: Option<f64>,
    pub witness: Option<Witness>,
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: true,
            constant: None,
            witness: None,
            flags: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = Some(c);
        self
    }

    pub fn fail(&mut self, witness: Witness) {
        if self.pass {
            self.witness = Some(witness);
        }
        self.pass = false;
    }

    pub fn flag(&mut self, flag: impl Into<String>) {
        let f = flag.into();
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}
