use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use segbench_core::phantom::{make_phantom, simulate_sweep, PhantomSampler, PhantomSpec, SweepSpec, SWEEP_FRAME_RANGE};
use segbench_core::reconstruction::reconstruct_on_grid;

use crate::manifest::{CaseEntry, Manifest, Split, MANIFEST_FILE};

#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_test_pro: usize,
    pub seed: u64,
    /// Acquire each case as a simulated tracked sweep and reconstruct it,
    /// instead of using the phantom volume directly.
    pub via_sweep: bool,
    pub sampler: PhantomSampler,
}

impl DatasetSpec {
    pub fn new(n_train: usize, n_val: usize, n_test: usize, seed: u64) -> Self {
        DatasetSpec {
            n_train,
            n_val,
            n_test,
            n_test_pro: 0,
            seed,
            via_sweep: false,
            sampler: PhantomSampler::default(),
        }
    }

    fn splits(&self) -> Vec<Split> {
        [
            (Split::Train, self.n_train),
            (Split::Validation, self.n_val),
            (Split::TestRetro, self.n_test),
            (Split::TestPro, self.n_test_pro),
        ]
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s, n))
        .collect()
    }
}

struct Planned {
    id: String,
    split: Split,
    phantom: PhantomSpec,
    sweep_frames: usize,
    sweep_seed: u64,
}

/// Generates phantom cases under `out_dir/cases/<id>/` and writes
/// `out_dir/manifest.json`.
///
/// All random draws happen up front from one seeded stream, so the files do
/// not depend on how many threads write them.
pub fn make_dataset(out_dir: impl AsRef<Path>, spec: &DatasetSpec) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plan: Vec<Planned> = spec
        .splits()
        .into_iter()
        .enumerate()
        .map(|(n, split)| Planned {
            id: format!("case_{:04}", n + 1),
            split,
            phantom: spec.sampler.sample(&mut rng),
            sweep_frames: rng.random_range(SWEEP_FRAME_RANGE.0..=SWEEP_FRAME_RANGE.1),
            sweep_seed: rng.random(),
        })
        .collect();

    fs::create_dir_all(out_dir.join("cases")).with_context(|| format!("creating {}", out_dir.display()))?;
    let cases = plan
        .par_iter()
        .map(|p| write_case(out_dir, p, spec.via_sweep))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(Some(spec.seed), cases, out_dir)?;
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn write_case(out_dir: &Path, p: &Planned, via_sweep: bool) -> Result<CaseEntry> {
    let rel = PathBuf::from("cases").join(&p.id);
    let dir = out_dir.join(&rel);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ph = make_phantom(&p.phantom).with_context(|| format!("case {}", p.id))?;
    let (volume, gt) = if via_sweep {
        let grid = ph.volume.grid();
        let spacing = grid.spacing().min();
        let sweep = simulate_sweep(&ph.volume, &SweepSpec::covering(grid, p.sweep_frames, spacing, p.sweep_seed))?;
        sweep.write_dir(dir.join("sweep"))?;
        let r = reconstruct_on_grid(&sweep, grid.clone())?;
        (r.volume, ph.ground_truth)
    } else {
        (ph.volume, ph.ground_truth)
    };
    volume.write_nrrd(dir.join("volume.nrrd"))?;
    gt.write_nrrd(dir.join("gt.nrrd"))?;
    p.phantom.write_json(dir.join("phantom.json"))?;
    Ok(CaseEntry {
        case_id: p.id.clone(),
        volume_path: rel.join("volume.nrrd"),
        gt_mask_path: rel.join("gt.nrrd"),
        tumor_box: p.phantom.lesion_box(),
        split: p.split,
    })
}

