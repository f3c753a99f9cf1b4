use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneratorMeta, Labeling, Pairwise, Ray, TomographyInstance};
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "dtomo-instance/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    format: String,
    width: usize,
    height: usize,
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unary: Option<Vec<Vec<f64>>>,
    pairwise: PairwiseFile,
    rays: Vec<Ray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<GeneratorMeta>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PairwiseFile {
    Potts { weight: f64 },
    AbsDiff { weight: f64 },
    Table { tables: Vec<Vec<f64>> },
}

impl TomographyInstance {
    pub fn to_json(&self) -> String {
        let unary = if self.unary.iter().all(|c| c.to_bits() == 0) {
            None
        } else {
            Some(self.unary.chunks(self.k).map(<[f64]>::to_vec).collect())
        };
        let pairwise = match &self.pairwise {
            Pairwise::Potts(w) => PairwiseFile::Potts { weight: *w },
            Pairwise::AbsDiff(w) => PairwiseFile::AbsDiff { weight: *w },
            Pairwise::Table(t) => PairwiseFile::Table { tables: t.clone() },
        };
        let file = InstanceFile {
            format: FORMAT_TAG.to_string(),
            width: self.width,
            height: self.height,
            k: self.k,
            unary,
            pairwise,
            rays: self.rays.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::parse(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        if file.format != FORMAT_TAG {
            return Err(Error::parse(
                "format",
                format!("expected `{FORMAT_TAG}`, got `{}`", file.format),
            ));
        }
        let n = file.width.saturating_mul(file.height);
        let unary = match file.unary {
            None => None,
            Some(rows) => {
                if rows.len() != n {
                    return Err(Error::validation("unary", format!("expected {n} rows, got {}", rows.len())));
                }
                let mut flat = Vec::with_capacity(n * file.k);
                for (u, row) in rows.into_iter().enumerate() {
                    if row.len() != file.k {
                        return Err(Error::validation(
                            format!("unary[{u}]"),
                            format!("expected {} costs, got {}", file.k, row.len()),
                        ));
                    }
                    flat.extend(row);
                }
                Some(flat)
            }
        };
        let pairwise = match file.pairwise {
            PairwiseFile::Potts { weight } => Pairwise::Potts(weight),
            PairwiseFile::AbsDiff { weight } => Pairwise::AbsDiff(weight),
            PairwiseFile::Table { tables } => Pairwise::Table(tables),
        };
        let mut inst = TomographyInstance::new(file.width, file.height, file.k, unary, pairwise, file.rays)?;
        inst.meta = file.meta;
        Ok(inst)
    }
}

pub fn save_instance(instance: &TomographyInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, instance.to_json() + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<TomographyInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TomographyInstance::from_json(&text)
}

/// Writes a plain (`P2`) PGM with `maxval = k - 1`.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, k: usize, labeling: &Labeling) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "P2\n{width} {height}\n{}", k - 1);
    for row in labeling.chunks(width).take(height) {
        let line: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a plain PGM; returns `(width, height, maxval, pixels)`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Labeling)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err(Error::parse("magic", "expected plain PGM `P2`"));
    }
    let mut next_num = |field: &str| -> Result<usize> {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::parse(field, "unexpected end of file"))?;
        tok.parse()
            .map_err(|_| Error::parse(field, format!("`{tok}` is not a non-negative integer")))
    };
    let width = next_num("width")?;
    let height = next_num("height")?;
    let maxval = next_num("maxval")?;
    let mut pixels = Vec::with_capacity(width * height);
    for i in 0..width * height {
        let v = next_num(&format!("pixel[{i}]"))?;
        if v > maxval {
            return Err(Error::validation(format!("pixel[{i}]"), format!("{v} exceeds maxval {maxval}")));
        }
        pixels.push(v);
    }
    Ok((width, height, maxval, Labeling(pixels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_lattice_rays, generate_random_instance, Direction, GeneratorConfig};

    #[test]
    fn json_round_trip_generated() {
        let cfg = GeneratorConfig::new(3, 5, 4, 3, vec![Direction::Horizontal, Direction::DiagDown]);
        let (inst, _) = generate_random_instance(&cfg).unwrap();
        let back = TomographyInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn json_round_trip_unary_and_tables() {
        let k = 2;
        let mut tables = Vec::new();
        for e in 0..4 {
            tables.push(vec![0.1 * e as f64, 1.0 / 3.0, -2.5, 1e-300]);
        }
        let unary = (0..8).map(|i| (i as f64).sqrt()).collect();
        let inst = TomographyInstance::new(
            2,
            2,
            k,
            Some(unary),
            Pairwise::Table(tables),
            build_lattice_rays(2, 2, &[Direction::Vertical]),
        )
        .unwrap();
        let back = TomographyInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
        let bits = |i: &TomographyInstance| i.unary_costs().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&inst), bits(&back));
    }

    fn minimal(k: usize, node: usize) -> String {
        format!(
            r#"{{"format":"dtomo-instance/1","width":2,"height":2,"k":{k},
               "pairwise":{{"kind":"abs_diff","weight":1.0}},
               "rays":[{{"nodes":[0,{node}],"target":1,"direction":"none"}}]}}"#
        )
    }

    #[test]
    fn rejects_single_label() {
        let err = TomographyInstance::from_json(&minimal(1, 1)).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "k"), "{err}");
    }

    #[test]
    fn rejects_out_of_grid_node() {
        let err = TomographyInstance::from_json(&minimal(3, 9)).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "rays[0].nodes[1]"), "{err}");
    }

    #[test]
    fn parse_error_names_field() {
        let text = minimal(3, 1).replace(r#""width":2"#, r#""width":"two""#);
        let err = TomographyInstance::from_json(&text).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "width"), "{err}");
        let text = minimal(3, 1).replace(r#""target":1"#, r#""target":-1"#);
        let err = TomographyInstance::from_json(&text).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "rays[0].target"), "{err}");
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = Labeling(vec![0, 1, 2, 2, 1, 0]);
        write_pgm(&path, 3, 2, 3, &img).unwrap();
        let (w, h, maxval, back) = read_pgm(&path).unwrap();
        assert_eq!((w, h, maxval), (3, 2, 2));
        assert_eq!(back, img);
    }
}
