//! Multi-view dataset writer and its text manifest.
//!
//! Layout under the dataset root:
//!
//! ```text
//! manifest.txt
//! <class>/<seed>/p<pitch>_y<yaw>_{rgb,depth,mask}.png
//! ```
//!
//! The manifest is a `key = value` header, a `[records]` line, a tab-separated
//! column line and one tab-separated record per sample. Paths are relative to
//! the root.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::camera::{CameraPose, GridSpec};
use super::raster::{rasterize, ViewSample, FRAME_SCALE};
use super::shape::{make_instance, ShapeClass, ShapeInstance};
use crate::error::{Error, Result};
use crate::image::{load_png, save_png, BitDepth};
use crate::kv::KvDoc;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const MANIFEST_VERSION: u32 = 1;
const RECORDS_MARKER: &str = "[records]";
const COLUMNS: &str = "class\tinstance_seed\tpitch\tyaw\trgb_path\tdepth_path\tmask_path";

/// What to render.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub classes: Vec<ShapeClass>,
    pub instances_per_class: usize,
    /// Instance seeds are `first_seed .. first_seed + instances_per_class`.
    pub first_seed: u64,
    pub grid: GridSpec,
    pub size: usize,
    pub distance: f64,
    pub fov: f64,
}

impl DatasetSpec {
    pub fn new(
        classes: Vec<ShapeClass>,
        instances_per_class: usize,
        grid: GridSpec,
        size: usize,
    ) -> Self {
        DatasetSpec {
            classes,
            instances_per_class,
            first_seed: 0,
            grid,
            size,
            distance: super::camera::DEFAULT_DISTANCE,
            fov: super::camera::DEFAULT_FOV,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.first_seed..self.first_seed + self.instances_per_class as u64
    }

    pub fn poses(&self) -> Result<Vec<CameraPose>> {
        Ok(self
            .grid
            .poses()?
            .into_iter()
            .map(|p| CameraPose {
                distance: self.distance,
                fov: self.fov,
                ..p
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub class: ShapeClass,
    pub instance_seed: u64,
    pub pitch: f64,
    pub yaw: f64,
    pub rgb_path: PathBuf,
    pub depth_path: PathBuf,
    pub mask_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub records: Vec<ManifestRecord>,
}

fn sample_paths(class: ShapeClass, seed: u64, pose: &CameraPose) -> [PathBuf; 3] {
    let dir = PathBuf::from(class.name()).join(format!("{seed:04}"));
    let stem = format!("p{}_y{}", pose.pitch, pose.yaw);
    ["rgb", "depth", "mask"].map(|kind| dir.join(format!("{stem}_{kind}.png")))
}

fn is_empty_dir(root: &Path) -> Result<bool> {
    match std::fs::read_dir(root) {
        Ok(mut it) => Ok(it.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(Error::io(root, e)),
    }
}

/// Renders every (class, instance, pose) sample under `root` and writes the
/// manifest. A non-empty `root` is refused unless `overwrite` is set, in which
/// case a previous manifest and class directories are replaced. Output bytes
/// depend only on the spec.
pub fn generate_dataset(
    spec: &DatasetSpec,
    root: &Path,
    overwrite: bool,
) -> Result<DatasetManifest> {
    if spec.classes.is_empty() || spec.instances_per_class == 0 {
        return Err(Error::InvalidArgument(
            "dataset needs at least one class and one instance".into(),
        ));
    }
    if !is_empty_dir(root)? {
        if !overwrite {
            return Err(Error::OutputExists(root.to_path_buf()));
        }
        let manifest = root.join(MANIFEST_FILE);
        if manifest.exists() {
            std::fs::remove_file(&manifest).map_err(|e| Error::io(&manifest, e))?;
        }
        for class in ShapeClass::ALL {
            let dir = root.join(class.name());
            if dir.is_dir() {
                std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
        }
    }
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let poses = spec.poses()?;
    let mut jobs = Vec::new();
    for &class in &spec.classes {
        for seed in spec.seeds() {
            let dir = root.join(class.name()).join(format!("{seed:04}"));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let inst = make_instance(class, seed);
            for pose in &poses {
                jobs.push((inst.clone(), *pose));
            }
        }
    }
    let records = jobs
        .par_iter()
        .map(|(inst, pose)| {
            let sample = rasterize(inst, pose, spec.size)?;
            let [rgb, depth, mask] = sample_paths(inst.class, inst.seed, pose);
            save_png(&sample.rgb, BitDepth::Eight, &root.join(&rgb))?;
            save_png(&sample.depth, BitDepth::Sixteen, &root.join(&depth))?;
            save_png(&sample.mask, BitDepth::Eight, &root.join(&mask))?;
            Ok(ManifestRecord {
                class: inst.class,
                instance_seed: inst.seed,
                pitch: pose.pitch,
                yaw: pose.yaw,
                rgb_path: rgb,
                depth_path: depth,
                mask_path: mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        spec: spec.clone(),
        records,
    };
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

impl DatasetManifest {
    fn header(&self) -> KvDoc {
        let s = &self.spec;
        let mut kv = KvDoc::new();
        kv.set("format_version", MANIFEST_VERSION);
        kv.set("size", s.size);
        kv.set("frame_scale", FRAME_SCALE);
        kv.set("distance", s.distance);
        kv.set("fov", s.fov);
        kv.set("grid", s.grid.describe());
        // The yaw range may cover the circle more than once; duplicates
        // modulo 360 are rendered only once.
        kv.set("yaw_dedup", "mod360");
        let names: Vec<&str> = s.classes.iter().map(|c| c.name()).collect();
        kv.set_list("classes", &names);
        kv.set("instances_per_class", s.instances_per_class);
        kv.set("first_seed", s.first_seed);
        kv
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header().render();
        out.push_str(RECORDS_MARKER);
        out.push('\n');
        out.push_str(COLUMNS);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.class,
                r.instance_seed,
                r.pitch,
                r.yaw,
                r.rgb_path.display(),
                r.depth_path.display(),
                r.mask_path.display()
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("manifest: {m}"));
        let (head, body) = text
            .split_once(&format!("{RECORDS_MARKER}\n"))
            .ok_or_else(|| bad(format!("missing {RECORDS_MARKER} line")))?;
        let doc = KvDoc::parse(head)?;
        let mut r = doc.reader();
        let version: u32 = r.required("format_version")?;
        if version != MANIFEST_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let size = r.required("size")?;
        let frame_scale: usize = r.required("frame_scale")?;
        if frame_scale != FRAME_SCALE {
            return Err(bad(format!(
                "frame_scale {frame_scale} differs from this renderer's {FRAME_SCALE}"
            )));
        }
        let distance = r.required("distance")?;
        let fov = r.required("fov")?;
        let grid = GridSpec::parse(&r.required::<String>("grid")?)?;
        r.allow("yaw_dedup");
        let classes = r
            .list::<String>("classes", Vec::new())?
            .iter()
            .map(|c| c.parse())
            .collect::<Result<Vec<ShapeClass>>>()?;
        let instances_per_class = r.required("instances_per_class")?;
        let first_seed = r.required("first_seed")?;
        r.finish()?;
        let spec = DatasetSpec {
            classes,
            instances_per_class,
            first_seed,
            grid,
            size,
            distance,
            fov,
        };

        let mut lines = body.lines();
        if lines.next() != Some(COLUMNS) {
            return Err(bad("missing or unexpected column line".into()));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [class, seed, pitch, yaw, rgb, depth, mask] = f[..] else {
                return Err(bad(format!(
                    "record {} has {} fields, expected 7",
                    i + 1,
                    f.len()
                )));
            };
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("record {}: bad number {v:?}", i + 1)))
            };
            records.push(ManifestRecord {
                class: class.parse()?,
                instance_seed: seed
                    .parse()
                    .map_err(|_| bad(format!("record {}: bad seed {seed:?}", i + 1)))?,
                pitch: num(pitch)?,
                yaw: num(yaw)?,
                rgb_path: rgb.into(),
                depth_path: depth.into(),
                mask_path: mask.into(),
            });
        }
        Ok(DatasetManifest { spec, records })
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }

    pub fn pose(&self, r: &ManifestRecord) -> CameraPose {
        CameraPose {
            pitch: r.pitch,
            yaw: r.yaw,
            distance: self.spec.distance,
            fov: self.spec.fov,
        }
    }

    /// Reads one record's images back from disk.
    pub fn load_sample(&self, root: &Path, r: &ManifestRecord) -> Result<ViewSample> {
        Ok(ViewSample {
            rgb: load_png(&root.join(&r.rgb_path))?,
            depth: load_png(&root.join(&r.depth_path))?,
            mask: load_png(&root.join(&r.mask_path))?,
            pose: self.pose(r),
            instance: make_instance(r.class, r.instance_seed),
        })
    }
}

/// All views of one instance, in grid order.
#[derive(Debug, Clone)]
pub struct InstanceViews {
    pub instance: ShapeInstance,
    pub views: Vec<ViewSample>,
}

/// Views of every instance of one class, held in memory.
#[derive(Debug, Clone)]
pub struct ClassViews {
    pub class: ShapeClass,
    pub instances: Vec<InstanceViews>,
}

impl ClassViews {
    /// Renders directly, without touching the disk.
    pub fn render(
        class: ShapeClass,
        seeds: impl IntoIterator<Item = u64>,
        poses: &[CameraPose],
        size: usize,
    ) -> Result<Self> {
        let instances = seeds
            .into_iter()
            .map(|seed| {
                let instance = make_instance(class, seed);
                let views = poses
                    .par_iter()
                    .map(|p| rasterize(&instance, p, size))
                    .collect::<Result<Vec<_>>>()?;
                Ok(InstanceViews { instance, views })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassViews { class, instances })
    }

    /// Loads every record of `class` from a generated dataset.
    pub fn load(manifest: &DatasetManifest, root: &Path, class: ShapeClass) -> Result<Self> {
        let mut instances: Vec<InstanceViews> = Vec::new();
        for r in manifest.records.iter().filter(|r| r.class == class) {
            let sample = manifest.load_sample(root, r)?;
            match instances
                .iter_mut()
                .find(|i| i.instance.seed == r.instance_seed)
            {
                Some(iv) => iv.views.push(sample),
                None => instances.push(InstanceViews {
                    instance: sample.instance.clone(),
                    views: vec![sample],
                }),
            }
        }
        if instances.is_empty() {
            return Err(Error::EmptyClass(class.name().to_string()));
        }
        Ok(ClassViews { class, instances })
    }

    pub fn view_count(&self) -> usize {
        self.instances.iter().map(|i| i.views.len()).sum()
    }
}
