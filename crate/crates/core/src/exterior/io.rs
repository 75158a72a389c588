//! Model and complex documents (JSON).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::flux::FluxForm;
use super::model::ExteriorModel;
use crate::error::{Error, Result};
use crate::graded::{GradedComplex, GradedSpace, GradingMode};
use crate::linalg::{Mat, Vector};
use crate::metric::MetricStructure;
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DocumentRepr {
    ExteriorModel {
        name: String,
        generators: Vec<String>,
        #[serde(default)]
        d_images: Vec<ImageRepr>,
        #[serde(default)]
        flux: Vec<FluxRepr>,
    },
    MatrixComplex {
        name: String,
        top_degree: usize,
        dims: Vec<usize>,
        blocks: Vec<BlockRepr>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<Vec<GramRepr>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        flux_operator: Option<Vec<BlockRepr>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRepr {
    pub generator: String,
    pub coeffs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxRepr {
    pub degree: usize,
    pub coeffs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRepr {
    pub from_degree: usize,
    pub to_degree: usize,
    pub matrix: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramRepr {
    pub degree: usize,
    pub gram: Vec<f64>,
}

/// A matrix complex with optional metric and flux-type deformation terms.
#[derive(Debug, Clone)]
pub struct MatrixComplexDoc {
    pub name: String,
    pub complex: GradedComplex,
    pub metric: MetricStructure,
    /// (i, H_{2i+1}) with H_{2i+1} raising degree by 2i+1.
    pub flux_terms: Vec<(usize, Mat)>,
}

#[derive(Debug, Clone)]
pub enum Document {
    Exterior { model: ExteriorModel, flux: FluxForm },
    Matrix(MatrixComplexDoc),
}

pub fn parse_document(text: &str) -> Result<Document> {
    let repr: DocumentRepr = serde_json::from_str(text)?;
    from_repr(&repr)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Document> {
    let text = std::fs::read_to_string(path)?;
    parse_document(&text)
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

pub fn from_repr(repr: &DocumentRepr) -> Result<Document> {
    match repr {
        DocumentRepr::ExteriorModel {
            name,
            generators,
            d_images,
            flux,
        } => {
            let free = ExteriorModel::free(name, generators.clone())?;
            let mut images = vec![Vec::new(); generators.len()];
            for (i, img) in d_images.iter().enumerate() {
                let g = generators
                    .iter()
                    .position(|x| x == &img.generator)
                    .ok_or_else(|| schema(format!("d_images[{i}].generator"), format!("unknown generator '{}'", img.generator)))?;
                for (label, &c) in &img.coeffs {
                    let (s, m) = free
                        .parse_monomial(label)
                        .map_err(|e| schema(format!("d_images[{i}].coeffs.{label}"), e.to_string()))?;
                    if m.len() != 2 {
                        return Err(schema(format!("d_images[{i}].coeffs.{label}"), "differential images must have degree 2"));
                    }
                    images[g].push((m, s * c));
                }
            }
            let model = ExteriorModel::new(name, generators.clone(), images)?;
            let mut comps: BTreeMap<usize, Vector> = BTreeMap::new();
            for (i, f) in flux.iter().enumerate() {
                if f.degree < 3 || f.degree % 2 == 0 {
                    return Err(schema(format!("flux[{i}].degree"), "flux components must have odd degree ≥ 3"));
                }
                let v = comps.entry(f.degree).or_insert_with(|| Vector::zeros(model.dim()));
                for (label, &c) in &f.coeffs {
                    let (s, m) = model
                        .parse_monomial(label)
                        .map_err(|e| schema(format!("flux[{i}].coeffs.{label}"), e.to_string()))?;
                    if m.len() != f.degree {
                        return Err(schema(
                            format!("flux[{i}].coeffs.{label}"),
                            format!("monomial has degree {}, component declares {}", m.len(), f.degree),
                        ));
                    }
                    v[model.index_of(&m).expect("parsed monomial exists")] += s * c;
                }
            }
            let flux = FluxForm::new(&model, comps)?;
            Ok(Document::Exterior { model, flux })
        }
        DocumentRepr::MatrixComplex {
            name,
            top_degree,
            dims,
            blocks,
            metric,
            flux_operator,
        } => {
            if dims.len() != top_degree + 1 {
                return Err(schema("dims", format!("expected {} entries (top_degree + 1), found {}", top_degree + 1, dims.len())));
            }
            let space = GradedSpace::from_dims(dims).map_err(|e| schema("dims", e.to_string()))?;
            let d = assemble_blocks(&space, blocks, "blocks")?;
            let all_unit = blocks.iter().all(|b| b.to_degree == b.from_degree + 1);
            let mode = if all_unit { GradingMode::Z } else { GradingMode::Z2 };
            let complex = GradedComplex::new(space.clone(), d, mode, &Tolerances::default())?;
            let metric = match metric {
                None => MetricStructure::identity(&space),
                Some(grams) => {
                    let mut gs: Vec<Mat> = space.pieces().iter().map(|p| Mat::identity(p.dim, p.dim)).collect();
                    for (i, g) in grams.iter().enumerate() {
                        let c = *dims
                            .get(g.degree)
                            .ok_or_else(|| schema(format!("metric[{i}].degree"), "degree out of range"))?;
                        if g.gram.len() != c * c {
                            return Err(schema(format!("metric[{i}].gram"), format!("expected {} entries", c * c)));
                        }
                        gs[g.degree] = Mat::from_row_slice(c, c, &g.gram);
                    }
                    MetricStructure::new(&space, gs)?
                }
            };
            let mut flux_terms: Vec<(usize, Mat)> = Vec::new();
            if let Some(fb) = flux_operator {
                let mut by_shift: HashMap<usize, Vec<BlockRepr>> = HashMap::new();
                for (i, b) in fb.iter().enumerate() {
                    let shift = b.to_degree.saturating_sub(b.from_degree);
                    if shift < 3 || shift % 2 == 0 {
                        return Err(schema(format!("flux_operator[{i}]"), "flux components must have odd degree ≥ 3"));
                    }
                    by_shift.entry(shift).or_default().push(b.clone());
                }
                let mut shifts: Vec<usize> = by_shift.keys().copied().collect();
                shifts.sort_unstable();
                for s in shifts {
                    let m = assemble_blocks(&space, &by_shift[&s], "flux_operator")?;
                    flux_terms.push(((s - 1) / 2, m));
                }
            }
            Ok(Document::Matrix(MatrixComplexDoc {
                name: name.clone(),
                complex,
                metric,
                flux_terms,
            }))
        }
    }
}

fn assemble_blocks(space: &GradedSpace, blocks: &[BlockRepr], field: &str) -> Result<Mat> {
    let dims = space.dims();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let n = space.dim();
    let mut d = Mat::zeros(n, n);
    for (i, b) in blocks.iter().enumerate() {
        let path = format!("{field}[{i}]");
        if b.from_degree >= dims.len() || b.to_degree >= dims.len() {
            return Err(schema(path, "degree out of range"));
        }
        let (r, c) = (dims[b.to_degree], dims[b.from_degree]);
        if b.matrix.len() != r * c {
            return Err(schema(format!("{path}.matrix"), format!("expected {r}x{c} = {} entries, found {}", r * c, b.matrix.len())));
        }
        for row in 0..r {
            for col in 0..c {
                d[(offsets[b.to_degree] + row, offsets[b.from_degree] + col)] += b.matrix[row * c + col];
            }
        }
    }
    Ok(d)
}

/// Document for an exterior model and flux.
pub fn exterior_repr(model: &ExteriorModel, flux: &FluxForm) -> DocumentRepr {
    let d_images = model
        .generators()
        .iter()
        .zip(model.d_images())
        .filter(|(_, img)| !img.is_empty())
        .map(|(g, img)| ImageRepr {
            generator: g.clone(),
            coeffs: img.iter().map(|(m, c)| (model.monomial_label(m), *c)).collect(),
        })
        .collect();
    let flux = flux
        .components()
        .iter()
        .map(|(k, v)| FluxRepr {
            degree: *k,
            coeffs: model
                .monomials()
                .iter()
                .enumerate()
                .filter(|(i, _)| v[*i] != 0.0)
                .map(|(i, m)| (model.monomial_label(m), v[i]))
                .collect(),
        })
        .collect();
    DocumentRepr::ExteriorModel {
        name: model.name().to_string(),
        generators: model.generators().to_vec(),
        d_images,
        flux,
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &ExteriorModel, flux: &FluxForm) -> Result<()> {
    let text = serde_json::to_string_pretty(&exterior_repr(model, flux))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes any serializable report as pretty JSON.
pub fn save_report<T: Serialize>(path: impl AsRef<Path>, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::model::build_su2;

    #[test]
    fn su2_round_trip() {
        let m = build_su2();
        let f = FluxForm::volume(&m, 2.0).unwrap();
        let text = serde_json::to_string(&exterior_repr(&m, &f)).unwrap();
        match parse_document(&text).unwrap() {
            Document::Exterior { model, flux } => {
                assert_eq!(model.d(), m.d());
                assert_eq!(flux.total(&model), f.total(&m));
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn matrix_complex_with_one_block() {
        let text = r#"{"kind":"matrix_complex","name":"pair","top_degree":1,"dims":[2,2],
            "blocks":[{"from_degree":0,"to_degree":1,"matrix":[1.0,0.0,0.0,2.0]}]}"#;
        match parse_document(text).unwrap() {
            Document::Matrix(doc) => {
                assert_eq!(doc.complex.space().dims(), vec![2, 2]);
                assert_eq!(doc.complex.mode(), GradingMode::Z);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn even_flux_rejected() {
        let text = r#"{"kind":"exterior_model","name":"t3","generators":["e1","e2","e3"],
            "flux":[{"degree":2,"coeffs":{"e1^e2":1.0}}]}"#;
        let err = parse_document(text).unwrap_err();
        assert!(err.to_string().contains("flux components must have odd degree ≥ 3"), "{err}");
        assert!(err.to_string().contains("flux[0].degree"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_document("{\n  \"kind\": \"exterior_model\",\n  oops }").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
