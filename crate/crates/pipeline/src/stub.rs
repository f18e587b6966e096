//! Stand-in external predictors used to exercise the external-process path.

use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Result};
use segbench_core::geometry::{Grid, ProbabilityMap, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum StubMode {
    /// Input intensities clamped to [0, 1].
    CopyInputAsProbability,
    /// All-zero map: the null predictor.
    Zeros,
    /// Exit nonzero without writing output.
    Fail,
    /// Sleep for a long time, to trigger timeouts.
    Sleep,
    /// Write a map on a grid one voxel larger than the input.
    WrongGrid,
    /// Write values outside [0, 1].
    OutOfRange,
}

pub fn run_stub(mode: StubMode, input: &Path, output: &Path) -> Result<()> {
    let v = Volume::read_nrrd(input)?;
    let grid = v.grid().clone();
    match mode {
        StubMode::CopyInputAsProbability => {
            let data = v.data().iter().map(|x| x.clamp(0.0, 1.0)).collect();
            ProbabilityMap::new(grid, data)?.write_nrrd(output)?;
        }
        StubMode::Zeros => ProbabilityMap::new(grid.clone(), vec![0.0; grid.len()])?.write_nrrd(output)?,
        StubMode::Fail => bail!("predict-stub asked to fail"),
        StubMode::Sleep => {
            std::thread::sleep(Duration::from_secs(3600));
        }
        StubMode::WrongGrid => {
            let d = grid.dims();
            let g = Grid::new([d[0] + 1, d[1], d[2]], *grid.spacing(), *grid.origin(), *grid.orientation())?;
            ProbabilityMap::new(g.clone(), vec![0.0; g.len()])?.write_nrrd(output)?;
        }
        StubMode::OutOfRange => {
            // ProbabilityMap refuses such values, so write through Volume.
            Volume::filled(grid, 2.0).write_nrrd(output)?;
        }
    }
    Ok(())
}
