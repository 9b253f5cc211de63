//! Mesh file ingestion: OFF, OBJ (v/f records), and ascii PLY.

use super::TriangleMesh;
use crate::error::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Ply,
}

impl MeshFormat {
    /// Infers the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(ext) if ext == "off" => Ok(Self::Off),
            Some(ext) if ext == "obj" => Ok(Self::Obj),
            Some(ext) if ext == "ply" => Ok(Self::Ply),
            other => Err(Error::Parse(format!(
                "cannot infer mesh format from extension {other:?} of {}",
                path.display()
            ))),
        }
    }
}

/// Loads and validates a triangle mesh. The mesh id is the file stem;
/// vertex order is preserved from the file.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(&text)?,
        MeshFormat::Obj => parse_obj(&text)?,
        MeshFormat::Ply => parse_ply(&text)?,
    };
    TriangleMesh::new(id, vertices, faces)
}

fn parse_f64(tok: &str, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad {what}: '{tok}'")))
}

fn parse_usize(tok: &str, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::Parse(format!("bad {what}: '{tok}'")))
}

fn parse_off(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty OFF file".into()))?;
    // counts may share the header line ("OFF 4 4 6") or follow it
    let counts_line;
    if header == "OFF" {
        counts_line = lines.next().ok_or_else(|| Error::Parse("OFF missing counts".into()))?.to_string();
    } else if let Some(rest) = header.strip_prefix("OFF") {
        counts_line = rest.trim().to_string();
    } else {
        return Err(Error::Parse(format!("not an OFF file (header '{header}')")));
    }
    let counts: Vec<&str> = counts_line.split_whitespace().collect();
    if counts.len() < 2 {
        return Err(Error::Parse(format!("bad OFF counts line '{counts_line}'")));
    }
    let nv = parse_usize(counts[0], "vertex count")?;
    let nf = parse_usize(counts[1], "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| Error::Parse("OFF truncated in vertex block".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::Parse(format!("bad OFF vertex line '{line}'")));
        }
        vertices.push([
            parse_f64(toks[0], "coordinate")?,
            parse_f64(toks[1], "coordinate")?,
            parse_f64(toks[2], "coordinate")?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| Error::Parse("OFF truncated in face block".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            return Err(Error::Parse("empty OFF face line".into()));
        }
        let arity = parse_usize(toks[0], "face arity")?;
        if arity != 3 || toks.len() < 4 {
            return Err(Error::Parse(format!("only triangle faces supported, got '{line}'")));
        }
        faces.push([
            parse_usize(toks[1], "face index")?,
            parse_usize(toks[2], "face index")?,
            parse_usize(toks[3], "face index")?,
        ]);
    }
    Ok((vertices, faces))
}

fn parse_obj(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let xyz: Vec<&str> = toks.collect();
                if xyz.len() < 3 {
                    return Err(Error::Parse(format!("bad OBJ vertex line '{line}'")));
                }
                vertices.push([
                    parse_f64(xyz[0], "coordinate")?,
                    parse_f64(xyz[1], "coordinate")?,
                    parse_f64(xyz[2], "coordinate")?,
                ]);
            }
            Some("f") => {
                let idx: Vec<&str> = toks.collect();
                if idx.len() != 3 {
                    return Err(Error::Parse(format!("only triangle faces supported, got '{line}'")));
                }
                let mut face = [0usize; 3];
                for (k, part) in idx.iter().enumerate() {
                    // "f 1/2/3" style: vertex index comes first
                    let v = part.split('/').next().unwrap_or("");
                    let one_based = parse_usize(v, "face index")?;
                    if one_based == 0 {
                        return Err(Error::Parse("OBJ face indices are 1-based".into()));
                    }
                    face[k] = one_based - 1;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_ply(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("ply") => {}
        other => return Err(Error::Parse(format!("not a PLY file (header {other:?})"))),
    }
    let mut nv = None;
    let mut nf = None;
    let mut coord_cols: Vec<usize> = Vec::new(); // positions of x,y,z among vertex properties
    let mut prop_count = 0usize;
    let mut in_vertex_element = false;
    for line in lines.by_ref() {
        let line = line.trim();
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", ..] => {}
            ["format", ..] => return Err(Error::Parse("only ascii PLY supported".into())),
            ["comment", ..] => {}
            ["element", "vertex", count] => {
                nv = Some(parse_usize(count, "vertex count")?);
                in_vertex_element = true;
                prop_count = 0;
            }
            ["element", "face", count] => {
                nf = Some(parse_usize(count, "face count")?);
                in_vertex_element = false;
            }
            ["element", ..] => {
                in_vertex_element = false;
            }
            ["property", "list", ..] => {}
            ["property", _ty, name] if in_vertex_element => {
                if matches!(*name, "x" | "y" | "z") {
                    coord_cols.push(prop_count);
                }
                prop_count += 1;
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(Error::Parse(format!("unexpected PLY header line '{line}'"))),
        }
    }
    let nv = nv.ok_or_else(|| Error::Parse("PLY missing vertex element".into()))?;
    let nf = nf.ok_or_else(|| Error::Parse("PLY missing face element".into()))?;
    if coord_cols.len() != 3 {
        return Err(Error::Parse("PLY vertex element must declare x, y, z".into()));
    }

    let mut data = lines.filter(|l| !l.trim().is_empty());
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = data.next().ok_or_else(|| Error::Parse("PLY truncated in vertex block".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < prop_count {
            return Err(Error::Parse(format!("bad PLY vertex line '{line}'")));
        }
        vertices.push([
            parse_f64(toks[coord_cols[0]], "coordinate")?,
            parse_f64(toks[coord_cols[1]], "coordinate")?,
            parse_f64(toks[coord_cols[2]], "coordinate")?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = data.next().ok_or_else(|| Error::Parse("PLY truncated in face block".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let arity = parse_usize(toks[0], "face arity")?;
        if arity != 3 || toks.len() < 4 {
            return Err(Error::Parse(format!("only triangle faces supported, got '{line}'")));
        }
        faces.push([
            parse_usize(toks[1], "face index")?,
            parse_usize(toks[2], "face index")?,
            parse_usize(toks[3], "face index")?,
        ]);
    }
    Ok((vertices, faces))
}

/// Writes a mesh in OFF format with full f64 precision.
pub fn write_off(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.n_vertices(), mesh.n_faces());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    const TET_OFF: &str = "OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn off_roundtrip_tetrahedron() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tet.off");
        std::fs::write(&path, TET_OFF).unwrap();
        let mesh = load_mesh(&path, MeshFormat::Off).unwrap();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_faces(), 4);
        assert_eq!(mesh.mesh_id, "tet");

        let path2 = dir.path().join("tet2.off");
        write_off(&mesh, &path2).unwrap();
        let mesh2 = load_mesh(&path2, MeshFormat::Off).unwrap();
        assert_eq!(mesh.vertices, mesh2.vertices);
        assert_eq!(mesh.faces, mesh2.faces);
    }

    #[test]
    fn off_out_of_range_index_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.off");
        std::fs::write(&path, "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 99\n").unwrap();
        let err = load_mesh(&path, MeshFormat::Off).unwrap_err();
        assert!(matches!(err, crate::Error::Validation(_)), "{err}");
    }

    #[test]
    fn obj_icosphere_counts() {
        use std::fmt::Write as _;
        let sphere = primitives::icosphere(1, 1.0);
        let mut obj = String::new();
        for v in &sphere.vertices {
            let _ = writeln!(obj, "v {} {} {}", v[0], v[1], v[2]);
        }
        for f in &sphere.faces {
            let _ = writeln!(obj, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sphere.obj");
        std::fs::write(&path, obj).unwrap();
        let mesh = load_mesh(&path, MeshFormat::Obj).unwrap();
        assert_eq!(mesh.n_vertices(), 42);
        assert_eq!(mesh.n_faces(), 80);
    }

    #[test]
    fn obj_slash_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        std::fs::write(
            &path,
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1/1 2/2 3/3\nf 1//1 2//2 4//4\nf 1 3 4\nf 2 4 3\n",
        )
        .unwrap();
        let mesh = load_mesh(&path, MeshFormat::Obj).unwrap();
        assert_eq!(mesh.n_faces(), 4);
    }

    #[test]
    fn ply_ascii_tetrahedron() {
        let ply = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 4\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tet.ply");
        std::fs::write(&path, ply).unwrap();
        let mesh = load_mesh(&path, MeshFormat::Ply).unwrap();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_faces(), 4);
    }

    #[test]
    fn malformed_off_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.off");
        std::fs::write(&path, "OFZ\n1 2 3\n").unwrap();
        let err = load_mesh(&path, MeshFormat::Off).unwrap_err();
        assert!(matches!(err, crate::Error::Parse(_)));
    }
}
