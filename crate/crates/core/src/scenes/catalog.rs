//! Declarative scene templates and their composition into 30 classes.

use std::sync::OnceLock;

use serde::Deserialize;

use super::{DelayMap, GRID, PIXELS};
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/scenes.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    grid: usize,
    road: Vec<RoadDef>,
    object: Vec<ObjectDef>,
    placement: Vec<PlacementGroup>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoadDef {
    name: String,
    layers: Vec<LayerDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDef {
    rows: [usize; 2],
    cols: [usize; 2],
    depth: Option<f64>,
    ramp: Option<[f64; 2]>,
    profile: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDef {
    name: String,
    rows: usize,
    cols: usize,
    /// Extra delay at the top and bottom rows of the silhouette.
    ramp: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlacementGroup {
    object: String,
    items: Vec<Placement>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Placement {
    road: String,
    row: usize,
    col: usize,
    depth: f64,
}

/// A rendered, un-jittered class template and the pixels jitter moves.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneTemplate {
    pub map: DelayMap,
    /// Object pixels, or every pixel for road-only classes.
    pub footprint: Vec<bool>,
}

#[derive(Clone, Debug)]
struct ClassEntry {
    name: String,
    template: SceneTemplate,
}

/// The 30 scene classes: 6 road conditions followed by 8 placements for each
/// of car, pedestrian and truck.
#[derive(Clone, Debug)]
pub struct SceneCatalog {
    roads: Vec<String>,
    objects: Vec<String>,
    classes: Vec<ClassEntry>,
}

impl SceneCatalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> &'static SceneCatalog {
        static CATALOG: OnceLock<SceneCatalog> = OnceLock::new();
        CATALOG.get_or_init(|| SceneCatalog::from_toml(BUILTIN).expect("built-in scene catalog is valid"))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: CatalogFile = toml::from_str(text).map_err(|e| Error::Parse {
            what: "scene catalog",
            line: 0,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| Error::Parse {
            what: "scene catalog",
            line: 0,
            reason,
        };
        if file.grid != GRID {
            return Err(bad(format!("grid must be {GRID}, got {}", file.grid)));
        }

        let mut roads = Vec::new();
        let mut classes = Vec::new();
        for road in &file.road {
            let map = paint_road(road).map_err(bad)?;
            roads.push((road.name.clone(), map));
        }
        for (name, delays) in &roads {
            classes.push(ClassEntry {
                name: name.clone(),
                template: SceneTemplate {
                    map: DelayMap::new(delays.clone(), classes.len())?,
                    footprint: vec![true; PIXELS],
                },
            });
        }

        for group in &file.placement {
            let object = file
                .object
                .iter()
                .find(|o| o.name == group.object)
                .ok_or_else(|| bad(format!("unknown object `{}`", group.object)))?;
            for p in &group.items {
                let (_, base) = roads
                    .iter()
                    .find(|(n, _)| *n == p.road)
                    .ok_or_else(|| bad(format!("unknown road `{}`", p.road)))?;
                let (delays, footprint) = composite(base, object, p).map_err(bad)?;
                classes.push(ClassEntry {
                    name: format!("{} on {} at ({}, {})", object.name, p.road, p.row, p.col),
                    template: SceneTemplate {
                        map: DelayMap::new(delays, classes.len())?,
                        footprint,
                    },
                });
            }
        }

        Ok(SceneCatalog {
            roads: roads.into_iter().map(|(n, _)| n).collect(),
            objects: file.object.iter().map(|o| o.name.clone()).collect(),
            classes,
        })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn road_names(&self) -> &[String] {
        &self.roads
    }

    pub fn object_names(&self) -> &[String] {
        &self.objects
    }

    pub fn class_name(&self, class_id: usize) -> Result<&str> {
        self.classes
            .get(class_id)
            .map(|c| c.name.as_str())
            .ok_or(Error::UnknownClass(class_id))
    }

    pub fn template(&self, class_id: usize) -> Result<&SceneTemplate> {
        self.classes
            .get(class_id)
            .map(|c| &c.template)
            .ok_or(Error::UnknownClass(class_id))
    }
}

fn check_rect(rows: [usize; 2], cols: [usize; 2]) -> Result<(), String> {
    if rows[0] > rows[1] || cols[0] > cols[1] || rows[1] >= GRID || cols[1] >= GRID {
        return Err(format!("rectangle rows {rows:?} cols {cols:?} is outside the grid"));
    }
    Ok(())
}

fn paint_road(road: &RoadDef) -> Result<Vec<f64>, String> {
    let mut delays = vec![1.0; PIXELS];
    for layer in &road.layers {
        check_rect(layer.rows, layer.cols)?;
        let height = layer.rows[1] - layer.rows[0] + 1;
        let depth_at: Box<dyn Fn(usize) -> f64> = match (&layer.depth, &layer.ramp, &layer.profile) {
            (Some(d), None, None) => {
                let d = *d;
                Box::new(move |_| d)
            }
            (None, Some([top, bottom]), None) => {
                let (top, bottom) = (*top, *bottom);
                Box::new(move |i| {
                    if height == 1 {
                        top
                    } else {
                        top + (bottom - top) * i as f64 / (height - 1) as f64
                    }
                })
            }
            (None, None, Some(profile)) if profile.len() == height => {
                let profile = profile.clone();
                Box::new(move |i| profile[i])
            }
            _ => {
                return Err(format!(
                    "layer of `{}` needs exactly one of depth, ramp or a profile of {height} values",
                    road.name
                ))
            }
        };
        for (i, r) in (layer.rows[0]..=layer.rows[1]).enumerate() {
            let d = depth_at(i);
            if !(0.0..=1.0).contains(&d) {
                return Err(format!("depth {d} in `{}` is outside [0, 1]", road.name));
            }
            for c in layer.cols[0]..=layer.cols[1] {
                delays[r * GRID + c] = d;
            }
        }
    }
    Ok(delays)
}

fn composite(base: &[f64], object: &ObjectDef, p: &Placement) -> Result<(Vec<f64>, Vec<bool>), String> {
    if object.rows == 0 || object.cols == 0 || p.row + 1 < object.rows {
        return Err(format!("`{}` does not fit above row {}", object.name, p.row));
    }
    let rows = [p.row + 1 - object.rows, p.row];
    let cols = [p.col, p.col + object.cols - 1];
    check_rect(rows, cols)?;
    let mut delays = base.to_vec();
    let mut footprint = vec![false; PIXELS];
    for (i, r) in (rows[0]..=rows[1]).enumerate() {
        let extra = if object.rows == 1 {
            object.ramp[1]
        } else {
            object.ramp[0] + (object.ramp[1] - object.ramp[0]) * i as f64 / (object.rows - 1) as f64
        };
        let d = p.depth + extra;
        for c in cols[0]..=cols[1] {
            let px = r * GRID + c;
            // The silhouette must be visible in full; hidden objects would make
            // classes indistinguishable.
            if !(d < delays[px]) {
                return Err(format!(
                    "`{}` on `{}` is occluded at pixel ({r}, {c})",
                    object.name, p.road
                ));
            }
            delays[px] = d;
            footprint[px] = true;
        }
    }
    Ok((delays, footprint))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_thirty_classes() {
        let cat = SceneCatalog::builtin();
        assert_eq!(cat.road_names().len(), 6);
        assert_eq!(cat.object_names(), ["car", "pedestrian", "truck"]);
        assert_eq!(cat.class_count(), 30);
        assert_eq!(cat.class_name(0).unwrap(), "road");
        assert!(cat.class_name(6).unwrap().starts_with("car on road"));
        assert!(matches!(cat.class_name(30), Err(Error::UnknownClass(30))));
    }

    #[test]
    fn templates_are_distinct() {
        let cat = SceneCatalog::builtin();
        for a in 0..30 {
            for b in a + 1..30 {
                assert_ne!(
                    cat.template(a).unwrap().map.delays(),
                    cat.template(b).unwrap().map.delays(),
                    "classes {a} and {b} render identically"
                );
            }
        }
    }

    #[test]
    fn object_footprints_match_silhouettes() {
        let cat = SceneCatalog::builtin();
        let sizes = [9, 4, 20];
        for class in 6..30 {
            let t = cat.template(class).unwrap();
            let n = t.footprint.iter().filter(|&&f| f).count();
            assert_eq!(n, sizes[(class - 6) / 8], "class {class}");
        }
    }

    #[test]
    fn rejects_occluded_object() {
        let text = r#"
grid = 16
[[road]]
name = "wall"
layers = [{ rows = [0, 15], cols = [0, 15], depth = 0.05 }]
[[object]]
name = "car"
rows = 1
cols = 1
ramp = [0.0, 0.0]
[[placement]]
object = "car"
items = [{ road = "wall", row = 3, col = 3, depth = 0.2 }]
"#;
        let err = SceneCatalog::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("occluded"), "{err}");
    }
}
