//! Datasets, task partitions, the dataset text format and the generators for
//! every toy problem and synthetic benchmark.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn from_i64(v: i64) -> Option<Self> {
        match v {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataPoint<T> {
    pub x: Vec<T>,
    pub y: Label,
}

impl<T: Scalar> DataPoint<T> {
    pub fn new(x: Vec<T>, y: Label) -> Self {
        Self { x, y }
    }

    pub fn positive(x: &[f64]) -> Self {
        Self::new(x.iter().map(|v| T::lit(*v)).collect(), Label::Positive)
    }

    pub fn negative(x: &[f64]) -> Self {
        Self::new(x.iter().map(|v| T::lit(*v)).collect(), Label::Negative)
    }
}

/// Disjoint cover of `[0, N)` by `M` nonempty index sets, each kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPartition {
    index_sets: Vec<Vec<usize>>,
}

impl TaskPartition {
    pub fn new(mut index_sets: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if index_sets.is_empty() {
            return Err(Error::Partition("at least one task is required".into()));
        }
        let mut owner = vec![usize::MAX; n];
        for (m, set) in index_sets.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(Error::Partition(format!("task {m} is empty")));
            }
            set.sort_unstable();
            for &i in set.iter() {
                if i >= n {
                    return Err(Error::Partition(format!(
                        "task {m} references index {i} outside [0, {n})"
                    )));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::Partition(format!(
                        "index {i} assigned to both task {} and task {m}",
                        owner[i]
                    )));
                }
                owner[i] = m;
            }
        }
        if let Some(i) = owner.iter().position(|o| *o == usize::MAX) {
            return Err(Error::Partition(format!("index {i} belongs to no task")));
        }
        Ok(Self { index_sets })
    }

    /// Partition from a per-point task assignment.
    pub fn from_assignment(task_of: &[usize], num_tasks: usize) -> Result<Self> {
        let mut sets = vec![Vec::new(); num_tasks];
        for (i, &m) in task_of.iter().enumerate() {
            if m >= num_tasks {
                return Err(Error::Partition(format!(
                    "point {i} assigned to task {m} but only {num_tasks} tasks exist"
                )));
            }
            sets[m].push(i);
        }
        Self::new(sets, task_of.len())
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![(0..n).collect()], n)
    }

    pub fn num_tasks(&self) -> usize {
        self.index_sets.len()
    }

    pub fn task(&self, m: usize) -> &[usize] {
        &self.index_sets[m]
    }

    pub fn index_sets(&self) -> &[Vec<usize>] {
        &self.index_sets
    }

    pub fn len(&self) -> usize {
        self.index_sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task_of(&self) -> Vec<usize> {
        let mut owner = vec![0; self.len()];
        for (m, set) in self.index_sets.iter().enumerate() {
            for &i in set {
                owner[i] = m;
            }
        }
        owner
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointDataset<T> {
    points: Vec<DataPoint<T>>,
    partition: TaskPartition,
    absorbed: bool,
    notes: Vec<String>,
}

impl<T: Scalar> JointDataset<T> {
    pub fn new(points: Vec<DataPoint<T>>, partition: TaskPartition) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Precondition("dataset has no points".into()))?;
        let d = first.x.len();
        if d == 0 {
            return Err(Error::Precondition("feature dimension must be at least 1".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.x.len(),
                });
            }
            if !linalg::all_finite(&p.x) {
                return Err(Error::Precondition(format!("point {i} has a non-finite coordinate")));
            }
        }
        if partition.len() != points.len() {
            return Err(Error::Partition(format!(
                "partition covers {} indices but the dataset has {} points",
                partition.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            partition,
            absorbed: false,
            notes: Vec::new(),
        })
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn dim(&self) -> usize {
        self.points[0].x.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.partition.num_tasks()
    }

    pub fn points(&self) -> &[DataPoint<T>] {
        &self.points
    }

    pub fn x(&self, i: usize) -> &[T] {
        &self.points[i].x
    }

    pub fn partition(&self) -> &TaskPartition {
        &self.partition
    }

    pub fn task(&self, m: usize) -> &[usize] {
        self.partition.task(m)
    }

    pub fn is_absorbed(&self) -> bool {
        self.absorbed
    }

    /// Folds labels into features: `x_i ← y_i·x_i`, `y_i ← +1`.
    pub fn absorb_labels(mut self) -> Result<Self> {
        if self.absorbed {
            return Err(Error::Precondition("labels are already absorbed".into()));
        }
        for p in &mut self.points {
            if p.y == Label::Negative {
                for v in &mut p.x {
                    *v = -*v;
                }
                p.y = Label::Positive;
            }
        }
        self.absorbed = true;
        Ok(self)
    }

    /// Absorbed view of the dataset, whatever its current state.
    pub fn into_absorbed(self) -> Self {
        if self.absorbed {
            self
        } else {
            self.absorb_labels().expect("not yet absorbed")
        }
    }

    pub(crate) fn require_absorbed(&self) -> Result<()> {
        if self.absorbed {
            Ok(())
        } else {
            Err(Error::Precondition(
                "dataset labels must be absorbed before use".into(),
            ))
        }
    }

    /// Same points under a different task partition.
    pub fn repartitioned(&self, partition: TaskPartition) -> Result<Self> {
        let mut out = Self::new(self.points.clone(), partition)?;
        out.absorbed = self.absorbed;
        out.notes = self.notes.clone();
        Ok(out)
    }

    /// Dataset restricted to the points of task `m`, as a single task.
    pub fn task_subset(&self, m: usize) -> Result<Self> {
        let idx = self.task(m);
        let pts = idx.iter().map(|&i| self.points[i].clone()).collect();
        let mut out = Self::new(pts, TaskPartition::single(idx.len())?)?;
        out.absorbed = self.absorbed;
        Ok(out)
    }

    pub fn vectors(&self) -> Vec<&[T]> {
        self.points.iter().map(|p| p.x.as_slice()).collect()
    }

    /// Writes the dataset text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            for line in note.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        if self.absorbed {
            let _ = writeln!(out, "# {ABSORBED_MARKER}");
        }
        let _ = writeln!(out, "{} {} {}", self.dim(), self.len(), self.num_tasks());
        let owner = self.partition.task_of();
        for (i, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{} {}", owner[i], p.y.as_i8());
            for v in &p.x {
                let _ = write!(out, " {}", format_decimal(v.to_f64_lossy()));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the dataset text format. `origin` is used in error messages.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut notes = Vec::new();
        let mut header: Option<(usize, usize, usize)> = None;
        let mut points = Vec::new();
        let mut task_of = Vec::new();
        let mut header_line = 0;
        let mut absorbed = false;
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                let c = c.strip_prefix(' ').unwrap_or(c);
                if header.is_none() {
                    if c == ABSORBED_MARKER {
                        absorbed = true;
                    } else {
                        notes.push(c.to_string());
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some((d, n, m)) = header else {
                if fields.len() != 3 {
                    return Err(err(lineno, format!("malformed header {line:?}, expected \"d N M\"")));
                }
                let parse = |s: &str, what: &str| {
                    s.parse::<usize>()
                        .map_err(|_| err(lineno, format!("malformed header: {what} {s:?} is not a non-negative integer")))
                };
                let d = parse(fields[0], "d")?;
                let n = parse(fields[1], "N")?;
                let m = parse(fields[2], "M")?;
                if d == 0 || n == 0 || m == 0 {
                    return Err(err(lineno, "malformed header: d, N and M must be positive".into()));
                }
                header = Some((d, n, m));
                header_line = lineno;
                continue;
            };
            if points.len() == n {
                return Err(err(lineno, format!("more than the declared {n} data rows")));
            }
            if fields.len() != d + 2 {
                return Err(err(
                    lineno,
                    format!("expected {} fields (task, label, {d} coordinates), found {}", d + 2, fields.len()),
                ));
            }
            let task: usize = fields[0]
                .parse()
                .map_err(|_| err(lineno, format!("task id {:?} is not a non-negative integer", fields[0])))?;
            if task >= m {
                return Err(err(lineno, format!("task id {task} outside [0, {m})")));
            }
            let label = fields[1]
                .trim_start_matches('+')
                .parse::<i64>()
                .ok()
                .and_then(Label::from_i64)
                .ok_or_else(|| err(lineno, format!("label {:?} is not -1 or 1", fields[1])))?;
            let mut x = Vec::with_capacity(d);
            for f in &fields[2..] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| err(lineno, format!("coordinate {f:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(err(lineno, format!("coordinate {f:?} is not finite")));
                }
                x.push(T::lit(v));
            }
            points.push(DataPoint::new(x, label));
            task_of.push(task);
        }
        let (_, n, m) = header.ok_or_else(|| err(1, "missing header line".into()))?;
        if points.len() != n {
            return Err(err(
                header_line,
                format!("header declares {n} rows but {} were found", points.len()),
            ));
        }
        let partition = TaskPartition::from_assignment(&task_of, m)
            .map_err(|e| err(header_line, e.to_string()))?;
        let mut ds = Self::new(points, partition).map_err(|e| err(header_line, e.to_string()))?;
        ds.notes = notes;
        ds.absorbed = absorbed;
        Ok(ds)
    }
}

/// Comment line marking rows whose labels are already folded into `x`.
const ABSORBED_MARKER: &str = "labels: absorbed";

/// Full-precision decimal rendering (17 significant digits).
pub fn format_decimal(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save_dataset<T: Scalar>(ds: &JointDataset<T>, path: &Path) -> Result<()> {
    std::fs::write(path, ds.to_text()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<JointDataset<T>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    JointDataset::from_text(&text, path)
}

fn positive_points<T: Scalar>(rows: &[&[f64]]) -> Vec<DataPoint<T>> {
    rows.iter().map(|r| DataPoint::positive(r)).collect()
}

/// Two tasks in R³ whose joint max-margin direction (1,0,0) lies outside
/// the span of the two per-task max-margin solutions.
pub fn make_span_toy<T: Scalar>() -> JointDataset<T> {
    let pts = positive_points(&[
        &[1.0, 1.0, 0.0],
        &[1.0, -2.0, 1.0],
        &[1.0, 0.0, 1.0],
        &[1.0, 1.0, -2.0],
    ]);
    let part = TaskPartition::new(vec![vec![0, 1], vec![2, 3]], 4).expect("static partition");
    JointDataset::new(pts, part).expect("static dataset")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSplit {
    Contradicting,
    Aligned,
}

/// Six points in the plane, split into two tasks either with all cross-task
/// inner products negative (`Contradicting`) or mixing upper and lower
/// points in each task (`Aligned`).
pub fn make_pair_dataset<T: Scalar>(split: PairSplit) -> JointDataset<T> {
    let pts = positive_points(&[
        &[1.0, 2.0],
        &[1.1, 1.8],
        &[1.2, 1.9],
        &[1.0, -2.0],
        &[1.1, -1.8],
        &[1.2, -1.9],
    ]);
    let (sets, note) = match split {
        PairSplit::Contradicting => (
            vec![vec![0, 1, 2], vec![3, 4, 5]],
            "split=contradicting: task 0 = upper points, task 1 = lower points",
        ),
        PairSplit::Aligned => (
            vec![vec![0, 4, 2], vec![1, 3, 5]],
            "split=aligned: task 0 = {(1,2),(1.1,-1.8),(1.2,1.9)}, task 1 = {(1.1,1.8),(1,-2),(1.2,-1.9)}",
        ),
    };
    let part = TaskPartition::new(sets, 6).expect("static partition");
    JointDataset::new(pts, part).expect("static dataset").with_note(note)
}

/// Five singleton tasks where one task pulls against four others; the joint
/// loss rises while the odd task trains.
pub fn make_bump_toy<T: Scalar>() -> JointDataset<T> {
    let pts = positive_points(&[
        &[1.0, -2.0],
        &[1.0, 2.0],
        &[1.1, 2.1],
        &[1.1, 2.2],
        &[1.1, 2.3],
    ]);
    let part = TaskPartition::new((0..5).map(|i| vec![i]).collect(), 5).expect("static partition");
    JointDataset::new(pts, part).expect("static dataset")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Disk { center: [f64; 2], radius: f64 },
    Rect { x: [f64; 2], y: [f64; 2] },
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Region::Disk { center, radius } => {
                if !(radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::Generator(format!("disk needs a positive radius, got {radius}")));
                }
            }
            Region::Rect { x, y } => {
                if !(x[1] > x[0]) || !(y[1] > y[0]) {
                    return Err(Error::Generator(format!(
                        "rectangle [{}, {}]×[{}, {}] has no area",
                        x[0], x[1], y[0], y[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let eps = 1e-12;
        match *self {
            Region::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (dx * dx + dy * dy).sqrt() <= radius + eps
            }
            Region::Rect { x, y } => {
                p[0] >= x[0] - eps && p[0] <= x[1] + eps && p[1] >= y[0] - eps && p[1] <= y[1] + eps
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        match *self {
            Region::Disk { center, radius } => {
                let r = radius * rng.gen::<f64>().sqrt();
                let a = std::f64::consts::TAU * rng.gen::<f64>();
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            }
            Region::Rect { x, y } => [rng.gen_range(x[0]..x[1]), rng.gen_range(y[0]..y[1])],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub positive: Region,
    pub negative: Region,
    pub count: usize,
    /// Point (x, label) substituted for a random sample after drawing.
    #[serde(default)]
    pub pinned: Option<([f64; 2], i8)>,
}

/// Per-task two-class distributions on bounded planar supports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator2D {
    pub tasks: Vec<TaskDistribution>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Generator2D {
    /// Three tasks of 100 points with pinned support points; the joint
    /// max-margin direction is (1,1)/√2 with margin 0.6√2.
    pub fn three_task_benchmark(seed: u64) -> Self {
        let disk = |c: [f64; 2], r: f64| Region::Disk { center: c, radius: r };
        let rect = |x: [f64; 2], y: [f64; 2]| Region::Rect { x, y };
        Self {
            tasks: vec![
                TaskDistribution {
                    positive: disk([0.6, 4.5], 0.9),
                    negative: rect([0.0, 1.5], [-3.9, -2.7]),
                    count: 100,
                    pinned: Some(([1.5, -2.7], -1)),
                },
                TaskDistribution {
                    positive: disk([5.1, 0.0], 0.75),
                    negative: rect([-4.2, -2.1], [-0.9, 0.9]),
                    count: 100,
                    pinned: Some(([-2.1, 0.9], -1)),
                },
                TaskDistribution {
                    positive: rect([0.6, 3.0], [0.6, 2.7]),
                    negative: disk([-3.0, -2.4], 1.2),
                    count: 100,
                    pinned: Some(([0.6, 0.6], 1)),
                },
            ],
            seed: Some(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Generator("generator has no tasks".into()));
        }
        for (m, t) in self.tasks.iter().enumerate() {
            t.positive.validate()?;
            t.negative.validate()?;
            if t.count == 0 {
                return Err(Error::Generator(format!("task {m} has an empty sample")));
            }
            if let Some((p, y)) = t.pinned {
                let region = match y {
                    1 => &t.positive,
                    -1 => &t.negative,
                    _ => return Err(Error::Generator(format!("task {m}: pinned label {y} is not ±1"))),
                };
                if !region.contains(p) {
                    return Err(Error::Generator(format!(
                        "task {m}: pinned point {p:?} lies outside its label's support"
                    )));
                }
            }
        }
        Ok(())
    }

    fn draw_task<R: Rng>(&self, m: usize, rng: &mut R, pin: bool) -> Vec<DataPoint<f64>> {
        let t = &self.tasks[m];
        let mut pts: Vec<DataPoint<f64>> = (0..t.count)
            .map(|_| {
                let y = if rng.gen::<bool>() { Label::Positive } else { Label::Negative };
                let region = if y == Label::Positive { &t.positive } else { &t.negative };
                let p = region.sample(rng);
                DataPoint::new(p.to_vec(), y)
            })
            .collect();
        if pin {
            if let Some((p, y)) = t.pinned {
                let slot = rng.gen_range(0..pts.len());
                pts[slot] = DataPoint::new(p.to_vec(), Label::from_i64(y as i64).expect("validated"));
            }
        }
        pts
    }

    fn assemble<T: Scalar>(tasks: Vec<Vec<DataPoint<f64>>>) -> JointDataset<T> {
        let mut points = Vec::new();
        let mut sets = Vec::new();
        for task in tasks {
            let start = points.len();
            for p in task {
                points.push(DataPoint::new(p.x.iter().map(|v| T::lit(*v)).collect(), p.y));
            }
            sets.push((start..points.len()).collect());
        }
        let n = points.len();
        let part = TaskPartition::new(sets, n).expect("contiguous partition");
        JointDataset::new(points, part).expect("finite sampled points")
    }
}

/// Source of training data for one seeded generator: either a single fixed
/// sample or a fresh sample every stage.
#[derive(Clone, Debug)]
pub enum DatasetProvider<T> {
    Fixed(JointDataset<T>),
    Resampling(ResamplingProvider<T>),
}

impl<T: Scalar> DatasetProvider<T> {
    pub fn fixed(&self) -> Option<&JointDataset<T>> {
        match self {
            DatasetProvider::Fixed(ds) => Some(ds),
            DatasetProvider::Resampling(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResamplingProvider<T> {
    generator: Generator2D,
    seed: u64,
    reference: JointDataset<T>,
}

/// Stream key reserved for the evaluation sample of a resampling provider.
const REFERENCE_STREAM: u64 = u64::MAX;

impl<T: Scalar> ResamplingProvider<T> {
    fn draw(&self, stream: u64) -> JointDataset<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let tasks = (0..self.generator.tasks.len())
            .map(|m| self.generator.draw_task(m, &mut rng, false))
            .collect();
        Generator2D::assemble::<T>(tasks).into_absorbed()
    }

    /// Fresh absorbed sample for `stage`; identical for identical seeds.
    pub fn sample_for_stage(&self, stage: usize) -> JointDataset<T> {
        self.draw(stage as u64)
    }

    /// Fixed absorbed sample used for evaluating losses and angles.
    pub fn reference(&self) -> &JointDataset<T> {
        &self.reference
    }

    pub fn num_tasks(&self) -> usize {
        self.generator.tasks.len()
    }
}

/// Draws the planar benchmark. In fixed mode pinned points replace one
/// random sample per task; in resampling mode nothing is pinned and every
/// stage sees a new sample.
pub fn sample_2d_tasks<T: Scalar>(gen: &Generator2D, resample: bool) -> Result<DatasetProvider<T>> {
    gen.validate()?;
    if resample {
        let seed = gen
            .seed
            .ok_or_else(|| Error::Generator("resampling mode requires an explicit seed".into()))?;
        let mut provider = ResamplingProvider {
            generator: gen.clone(),
            seed,
            reference: make_span_toy(),
        };
        provider.reference = provider.draw(REFERENCE_STREAM);
        return Ok(DatasetProvider::Resampling(provider));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed.unwrap_or(0));
    let tasks = (0..gen.tasks.len())
        .map(|m| gen.draw_task(m, &mut rng, true))
        .collect();
    Ok(DatasetProvider::Fixed(Generator2D::assemble(tasks)))
}

/// Shape of a strictly non-separable planar instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonseparableSpec {
    /// Fraction in (0, 1] by which the two label clusters overlap.
    pub overlap: f64,
    pub seed: u64,
    #[serde(default = "NonseparableSpec::default_tasks")]
    pub tasks: usize,
    #[serde(default = "NonseparableSpec::default_per_task")]
    pub points_per_task: usize,
    #[serde(default = "NonseparableSpec::default_radius")]
    pub radius: f64,
}

impl NonseparableSpec {
    pub const MIN_B: f64 = 1e-3;
    const MAX_ATTEMPTS: usize = 64;

    fn default_tasks() -> usize {
        2
    }
    fn default_per_task() -> usize {
        20
    }
    fn default_radius() -> f64 {
        1.0
    }

    pub fn new(overlap: f64, seed: u64) -> Self {
        Self {
            overlap,
            seed,
            tasks: Self::default_tasks(),
            points_per_task: Self::default_per_task(),
            radius: Self::default_radius(),
        }
    }
}

/// Two opposing-label disks of equal radius whose centers sit
/// `2·radius·(1 − overlap)` apart along (0.6, 0.8). Samples are redrawn
/// until the joint set is full rank, not separable, and has a
/// nonseparability coefficient above [`NonseparableSpec::MIN_B`].
pub fn make_nonseparable<T: Scalar>(spec: &NonseparableSpec) -> Result<JointDataset<T>> {
    if !(spec.overlap > 0.0 && spec.overlap <= 1.0) {
        return Err(Error::Precondition(format!(
            "overlap must lie in (0, 1], got {}",
            spec.overlap
        )));
    }
    if spec.tasks == 0 || spec.points_per_task == 0 || !(spec.radius > 0.0) {
        return Err(Error::Precondition("tasks, points per task and radius must be positive".into()));
    }
    let offset = spec.radius * (1.0 - spec.overlap);
    let dir = [0.6, 0.8];
    let pos = Region::Disk {
        center: [offset * dir[0], offset * dir[1]],
        radius: spec.radius,
    };
    let neg = Region::Disk {
        center: [-offset * dir[0], -offset * dir[1]],
        radius: spec.radius,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_reason = String::new();
    for _ in 0..NonseparableSpec::MAX_ATTEMPTS {
        let tasks: Vec<Vec<DataPoint<f64>>> = (0..spec.tasks)
            .map(|_| {
                (0..spec.points_per_task)
                    .map(|_| {
                        let y = if rng.gen::<bool>() { Label::Positive } else { Label::Negative };
                        let p = if y == Label::Positive { pos.sample(&mut rng) } else { neg.sample(&mut rng) };
                        DataPoint::new(p.to_vec(), y)
                    })
                    .collect()
            })
            .collect();
        let raw = Generator2D::assemble::<f64>(tasks);
        let ds = raw.clone().into_absorbed();
        if linalg::rank(&ds.vectors()) < ds.dim() {
            last_reason = "rank deficient sample".into();
            continue;
        }
        if geometry::separability_check(&ds)?.is_separable() {
            last_reason = "sample is linearly separable".into();
            continue;
        }
        let b = geometry::nonseparability_coefficient_b(&ds, geometry::DEFAULT_B_RESOLUTION)?;
        if b.value <= NonseparableSpec::MIN_B {
            last_reason = format!("nonseparability coefficient {:.3e} too small", b.value);
            continue;
        }
        let points = raw
            .points()
            .iter()
            .map(|p| DataPoint::new(p.x.iter().map(|v| T::lit(*v)).collect(), p.y))
            .collect();
        let note = format!(
            "nonseparable overlap={} seed={} tasks={} points_per_task={} radius={}",
            spec.overlap, spec.seed, spec.tasks, spec.points_per_task, spec.radius
        );
        return Ok(JointDataset::new(points, raw.partition().clone())?.with_note(note));
    }
    Err(Error::Generator(format!(
        "no acceptable non-separable sample after {} attempts ({last_reason})",
        NonseparableSpec::MAX_ATTEMPTS
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorb_flips_negative_points_only() {
        let pts = vec![DataPoint::<f64>::negative(&[1.0, 2.0]), DataPoint::positive(&[3.0, 0.0])];
        let ds = JointDataset::new(pts, TaskPartition::single(2).unwrap()).unwrap();
        let ab = ds.absorb_labels().unwrap();
        assert_eq!(ab.x(0), &[-1.0, -2.0]);
        assert_eq!(ab.x(1), &[3.0, 0.0]);
        assert!(ab.points().iter().all(|p| p.y == Label::Positive));
        assert!(matches!(ab.absorb_labels(), Err(Error::Precondition(_))));
    }

    #[test]
    fn all_positive_dataset_is_unchanged_by_absorption() {
        for split in [PairSplit::Contradicting, PairSplit::Aligned] {
            let raw = make_pair_dataset::<f64>(split);
            let ab = raw.clone().absorb_labels().unwrap();
            assert_eq!(raw.points(), ab.points());
        }
    }

    #[test]
    fn partition_rejects_overlap_gap_and_empty() {
        assert!(TaskPartition::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(TaskPartition::new(vec![vec![0], vec![2]], 3).is_err());
        assert!(TaskPartition::new(vec![vec![0, 1, 2], vec![]], 3).is_err());
        assert!(TaskPartition::new(vec![], 0).is_err());
        assert!(TaskPartition::from_assignment(&[0, 5], 2).is_err());
    }

    #[test]
    fn header_and_rows_parse() {
        let text = "# comment\n3 4 2\n0 1 1 0 0\n0 -1 0 1 0\n1 1 0 0 1\n1 1 1 1 1\n";
        let ds = JointDataset::<f64>::from_text(text, Path::new("mem")).unwrap();
        assert_eq!((ds.dim(), ds.len(), ds.num_tasks()), (3, 4, 2));
        assert_eq!(ds.notes(), &["comment".to_string()]);
        assert_eq!(ds.task(1), &[2, 3]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("3 4\n", 1, "malformed header"),
            ("2 1 2\n5 1 0 0\n", 2, "task id 5"),
            ("2 1 1\n0 2 0 0\n", 2, "label"),
            ("2 1 1\n0 1 0 abc\n", 2, "not a number"),
            ("2 2 1\n0 1 0 0\n", 1, "declares 2 rows"),
            ("2 2 2\n0 1 0 0\n0 1 1 1\n", 1, "task 1 is empty"),
        ];
        for (text, line, needle) in cases {
            match JointDataset::<f64>::from_text(text, Path::new("f.txt")) {
                Err(Error::Parse { line: l, message, .. }) => {
                    assert_eq!(l, line, "{text:?}: {message}");
                    assert!(message.contains(needle), "{message} lacks {needle}");
                }
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn generator_validation() {
        let mut g = Generator2D::three_task_benchmark(1);
        g.validate().unwrap();
        g.tasks[0].positive = Region::Disk { center: [0.0, 0.0], radius: 0.0 };
        assert!(sample_2d_tasks::<f64>(&g, false).is_err());
        let mut g = Generator2D::three_task_benchmark(1);
        g.tasks[1].pinned = Some(([100.0, 0.0], -1));
        assert!(g.validate().is_err());
        let mut g = Generator2D::three_task_benchmark(1);
        g.seed = None;
        assert!(sample_2d_tasks::<f64>(&g, true).is_err());
        assert!(sample_2d_tasks::<f64>(&g, false).is_ok());
    }

    #[test]
    fn resampling_is_seed_deterministic() {
        let g = Generator2D::three_task_benchmark(11);
        let a = sample_2d_tasks::<f64>(&g, true).unwrap();
        let b = sample_2d_tasks::<f64>(&g, true).unwrap();
        let (DatasetProvider::Resampling(a), DatasetProvider::Resampling(b)) = (a, b) else {
            panic!("expected resampling providers");
        };
        for stage in [0, 1, 7] {
            assert_eq!(a.sample_for_stage(stage), b.sample_for_stage(stage));
        }
        assert_ne!(a.sample_for_stage(0), a.sample_for_stage(1));
        let other = Generator2D::three_task_benchmark(12);
        let DatasetProvider::Resampling(c) = sample_2d_tasks::<f64>(&other, true).unwrap() else {
            unreachable!()
        };
        assert_ne!(a.sample_for_stage(0), c.sample_for_stage(0));
    }

    #[test]
    fn nonseparable_rejects_bad_overlap() {
        assert!(make_nonseparable::<f64>(&NonseparableSpec::new(0.0, 1)).is_err());
        assert!(make_nonseparable::<f64>(&NonseparableSpec::new(1.5, 1)).is_err());
    }
}
