use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default synthon library shipped with the crate.
pub const DEFAULT_LIBRARY_JSON: &str = include_str!("../../data/default_library.json");

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Klass {
    Alpha,
    Beta,
}

impl Klass {
    pub fn complement(self) -> Klass {
        match self {
            Klass::Alpha => Klass::Beta,
            Klass::Beta => Klass::Alpha,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Klass::Alpha => 0,
            Klass::Beta => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthonKind {
    Brick,
    Linker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachmentPoint {
    /// Index into the owning synthon's point list.
    pub point: usize,
    pub klass: Klass,
    /// Unit bond direction in the synthon's local frame.
    pub direction: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synthon {
    pub id: String,
    pub kind: SynthonKind,
    pub points: Vec<Point>,
    pub attachments: Vec<AttachmentPoint>,
}

impl Synthon {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_brick(&self) -> bool {
        self.kind == SynthonKind::Brick
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Library(format!("synthon `{}`: {msg}", self.id)));
        if !(2..=6).contains(&self.points.len()) {
            return err(format!("{} points, expected 2..=6", self.points.len()));
        }
        let expected = match self.kind {
            SynthonKind::Brick => 1,
            SynthonKind::Linker => 2,
        };
        if self.attachments.len() != expected {
            return err(format!(
                "{:?} needs {expected} attachment(s), found {}",
                self.kind,
                self.attachments.len()
            ));
        }
        for (i, a) in self.attachments.iter().enumerate() {
            if a.point >= self.points.len() {
                return err(format!("attachment {i} references point {}", a.point));
            }
            if self.attachments[..i].iter().any(|b| b.point == a.point) {
                return err(format!("attachment point {} used twice", a.point));
            }
            let norm = a.direction[0].hypot(a.direction[1]);
            if (norm - 1.0).abs() > 1e-12 {
                return err(format!("attachment {i} direction has norm {norm}"));
            }
        }
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return err("non-finite coordinate".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    version: u32,
    synthons: Vec<Synthon>,
}

/// An ordered, validated collection of synthons.
#[derive(Debug, Clone)]
pub struct Library {
    version: u32,
    synthons: Vec<Synthon>,
    by_id: HashMap<String, usize>,
    hash: String,
}

impl Library {
    pub fn new(version: u32, synthons: Vec<Synthon>) -> Result<Self> {
        if synthons.is_empty() {
            return Err(Error::Library("library has no synthons".into()));
        }
        let mut by_id = HashMap::new();
        for (i, s) in synthons.iter().enumerate() {
            s.validate()?;
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(Error::Library(format!("duplicate synthon id `{}`", s.id)));
            }
        }
        if !synthons.iter().any(Synthon::is_brick) {
            return Err(Error::Library("library has no bricks".into()));
        }
        let canonical = serde_json::to_string(&LibraryFile { version, synthons: synthons.clone() })?;
        let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        Ok(Self { version, synthons, by_id, hash })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LibraryFile = serde_json::from_str(text)
            .map_err(|e| Error::Library(format!("parse error: {e}")))?;
        Self::new(file.version, file.synthons)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::MissingFile { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn default_library() -> Self {
        Self::from_json(DEFAULT_LIBRARY_JSON).expect("bundled library is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LibraryFile { version: self.version, synthons: self.synthons.clone() })
            .expect("library serializes")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn len(&self) -> usize {
        self.synthons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synthons.is_empty()
    }

    pub fn get(&self, index: usize) -> &Synthon {
        &self.synthons[index]
    }

    pub fn synthons(&self) -> &[Synthon] {
        &self.synthons
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::Library(format!("unknown synthon `{id}`")))
    }

    pub fn bricks(&self) -> impl Iterator<Item = usize> + '_ {
        self.synthons.iter().enumerate().filter(|(_, s)| s.is_brick()).map(|(i, _)| i)
    }

    pub fn max_attachments(&self) -> usize {
        self.synthons.iter().map(|s| s.attachments.len()).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_library_shape() {
        let lib = Library::default_library();
        assert_eq!(lib.bricks().count(), 4);
        assert_eq!(lib.len() - lib.bricks().count(), 2);
        let alpha = lib
            .bricks()
            .filter(|&i| lib.get(i).attachments[0].klass == Klass::Alpha)
            .count();
        assert_eq!(alpha, 2);
        for s in lib.synthons() {
            match s.kind {
                SynthonKind::Brick => assert!((2..=3).contains(&s.len())),
                SynthonKind::Linker => {
                    assert_eq!(s.len(), 2);
                    let mut k: Vec<_> = s.attachments.iter().map(|a| a.klass).collect();
                    k.sort();
                    assert_eq!(k, vec![Klass::Alpha, Klass::Beta]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_synthons() {
        let brick = |atts: Vec<AttachmentPoint>| Synthon {
            id: "x".into(),
            kind: SynthonKind::Brick,
            points: vec![[0.0, 0.0], [1.0, 0.0]],
            attachments: atts,
        };
        let att = |p, d: Point| AttachmentPoint { point: p, klass: Klass::Alpha, direction: d };
        assert!(Library::new(1, vec![brick(vec![])]).is_err());
        assert!(Library::new(1, vec![brick(vec![att(5, [1.0, 0.0])])]).is_err());
        assert!(Library::new(1, vec![brick(vec![att(0, [2.0, 0.0])])]).is_err());
        assert!(Library::new(1, vec![brick(vec![att(0, [1.0, 0.0])])]).is_ok());
        let mut linker = brick(vec![att(0, [1.0, 0.0]), att(0, [0.0, 1.0])]);
        linker.kind = SynthonKind::Linker;
        assert!(Library::new(1, vec![brick(vec![att(0, [1.0, 0.0])]), linker]).is_err());
    }

    #[test]
    fn hash_is_stable_across_round_trip() {
        let lib = Library::default_library();
        let again = Library::from_json(&lib.to_json()).unwrap();
        assert_eq!(lib.hash(), again.hash());
    }
}
