//! JSON file formats for spaces, maps and curve families. Unknown fields are
//! rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covering::VertexMap;
use crate::error::{Error, Result};
use crate::modulus::CurveFamily;
use crate::space::{Curve, DistMatrix, Edge, Space, VertexSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexRecord {
    pub id: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub u: String,
    pub v: String,
    pub len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistField {
    /// The literal string `"path"`.
    Path(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
    pub dist: DistField,
}

impl SpaceFile {
    pub fn from_space(space: &Space) -> Self {
        Self {
            vertices: (0..space.n())
                .map(|v| VertexRecord {
                    id: space.id(v).to_string(),
                    mass: space.mass(v),
                })
                .collect(),
            edges: space
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    u: space.id(e.u).to_string(),
                    v: space.id(e.v).to_string(),
                    len: e.len,
                })
                .collect(),
            dist: if space.is_path_metric() {
                DistField::Path("path".into())
            } else {
                DistField::Matrix(space.dist().rows())
            },
        }
    }

    /// Builds the space; every structural problem is reported at once.
    pub fn into_space(self) -> Result<Space> {
        let ids: Vec<String> = self.vertices.iter().map(|v| v.id.clone()).collect();
        let masses: Vec<f64> = self.vertices.iter().map(|v| v.mass).collect();
        let mut findings = Vec::new();
        let index = |id: &str, findings: &mut Vec<String>| {
            let i = ids.iter().position(|x| x == id);
            if i.is_none() {
                findings.push(format!("edge endpoint `{id}` is not a vertex"));
            }
            i
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let u = index(&e.u, &mut findings);
            let v = index(&e.v, &mut findings);
            if let (Some(u), Some(v)) = (u, v) {
                edges.push(Edge { u, v, len: e.len });
            }
        }
        if !findings.is_empty() {
            return Err(Error::InvalidSpace(findings));
        }
        match self.dist {
            DistField::Path(s) if s == "path" => Space::from_graph(ids, masses, edges),
            DistField::Path(s) => Err(Error::InvalidSpace(vec![format!(
                "dist must be \"path\" or a matrix, got \"{s}\""
            )])),
            DistField::Matrix(rows) => {
                let dist = DistMatrix::from_rows(rows)?;
                Space::with_dist(ids, masses, edges, dist)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    /// Space file, relative to the map file's directory.
    pub source: String,
    pub target: String,
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectRecord {
    #[serde(rename = "E")]
    pub e: Vec<String>,
    #[serde(rename = "F")]
    pub f: Vec<String>,
    /// Defaults to every vertex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connect: Option<ConnectRecord>,
}

fn ids_to_set(space: &Space, ids: &[String]) -> Result<VertexSet> {
    let mut out: VertexSet = ids.iter().map(|s| space.vertex(s)).collect::<Result<_>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

impl FamilyFile {
    pub fn into_family(self, space: &Space) -> Result<CurveFamily> {
        match (self.curves, self.connect) {
            (Some(curves), None) => {
                let curves = curves
                    .iter()
                    .map(|c| {
                        let vs = c
                            .iter()
                            .map(|s| space.vertex(s))
                            .collect::<Result<Vec<_>>>()?;
                        Curve::new(space, vs)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CurveFamily::Explicit(curves))
            }
            (None, Some(c)) => {
                let within = match &c.within {
                    Some(w) => ids_to_set(space, w)?,
                    None => (0..space.n()).collect(),
                };
                Ok(CurveFamily::connecting(
                    ids_to_set(space, &c.e)?,
                    ids_to_set(space, &c.f)?,
                    within,
                ))
            }
            _ => Err(Error::InvalidArgument(
                "family file needs exactly one of \"curves\" or \"connect\"".into(),
            )),
        }
    }

    pub fn from_family(space: &Space, family: &CurveFamily) -> Self {
        let names = |s: &[usize]| {
            s.iter()
                .map(|&v| space.id(v).to_string())
                .collect::<Vec<_>>()
        };
        match family {
            CurveFamily::Explicit(curves) => Self {
                curves: Some(curves.iter().map(|c| names(c.vertices())).collect()),
                connect: None,
            },
            CurveFamily::Connecting { e, f, within } => Self {
                curves: None,
                connect: Some(ConnectRecord {
                    e: names(e),
                    f: names(f),
                    within: Some(names(within)),
                }),
            },
        }
    }
}

pub fn read_space(path: &Path) -> Result<Space> {
    let file: SpaceFile = serde_json::from_slice(&fs::read(path)?)?;
    file.into_space()
}

/// Paths of the two space files referenced by a map file.
pub fn map_parts(path: &Path, file: &MapFile) -> (PathBuf, PathBuf) {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    (dir.join(&file.source), dir.join(&file.target))
}

pub fn read_map(path: &Path) -> Result<VertexMap> {
    let file: MapFile = serde_json::from_slice(&fs::read(path)?)?;
    let (s, t) = map_parts(path, &file);
    VertexMap::from_pairs(read_space(&s)?, read_space(&t)?, &file.pairs)
}

pub fn read_family(path: &Path, space: &Space) -> Result<CurveFamily> {
    let file: FamilyFile = serde_json::from_slice(&fs::read(path)?)?;
    file.into_family(space)
}

pub fn map_file(f: &VertexMap, source: &str, target: &str) -> MapFile {
    MapFile {
        source: source.into(),
        target: target.into(),
        pairs: (0..f.source().n())
            .map(|x| {
                (
                    f.source().id(x).to_string(),
                    f.target().id(f.apply(x)).to_string(),
                )
            })
            .collect(),
    }
}

/// Writes `<stem>.source.json`, `<stem>.target.json` and `<stem>.json` into
/// `dir`; returns the map file path.
pub fn write_map(dir: &Path, stem: &str, f: &VertexMap) -> Result<PathBuf> {
    let s = format!("{stem}.source.json");
    let t = format!("{stem}.target.json");
    write_json(&dir.join(&s), &SpaceFile::from_space(f.source()))?;
    write_json(&dir.join(&t), &SpaceFile::from_space(f.target()))?;
    let m = dir.join(format!("{stem}.json"));
    write_json(&m, &map_file(f, &s, &t))?;
    Ok(m)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    #[test]
    fn space_round_trip() {
        let g = generators::polar_grid(2, 5, 1.0, 2.0).unwrap();
        let json = serde_json::to_string(&SpaceFile::from_space(&g)).unwrap();
        let back: SpaceFile = serde_json::from_str(&json).unwrap();
        let h = back.into_space().unwrap();
        assert_eq!(h.ids(), g.ids());
        assert_eq!(h.dist(), g.dist());
    }

    #[test]
    fn unknown_fields_rejected() {
        let s = r#"{"vertices":[{"id":"a","mass":1,"x":0}],"edges":[],"dist":"path"}"#;
        assert!(serde_json::from_str::<SpaceFile>(s).is_err());
        let f = r#"{"connect":{"E":["a"],"F":["b"],"extra":1}}"#;
        assert!(serde_json::from_str::<FamilyFile>(f).is_err());
    }

    #[test]
    fn asymmetric_matrix_reported() {
        let s = r#"{"vertices":[{"id":"a","mass":1},{"id":"b","mass":1}],
                    "edges":[{"u":"a","v":"b","len":1}],
                    "dist":[[0,1],[2,0]]}"#;
        let file: SpaceFile = serde_json::from_str(s).unwrap();
        match file.into_space() {
            Err(Error::InvalidSpace(f)) => {
                assert!(f.iter().any(|m| m.contains("dist not symmetric")))
            }
            other => panic!("{other:?}"),
        }
    }
}
