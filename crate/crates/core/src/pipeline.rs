//! End-to-end estimation: segmentation, skeletons, sparse attraction, dense
//! interpolation and optional refinement.

use alloc::vec::Vec;

use crate::dense_interp::{interpolate, InterpParams};
use crate::error::Result;
use crate::flow::FlowField;
use crate::imaging::{check_dims, threshold_mask, Frame, Mask, DEFAULT_EPSILON};
use crate::refine::{refine, RefineParams};
use crate::skeleton::{build_skeleton, MultiScaleSkeleton, ScaleSet};
use crate::sparse_flow::{estimate_sparse, AttractionParams, SparseFlow};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    /// Segmentation threshold on the 8-bit scale.
    pub epsilon: f64,
    pub scales: ScaleSet,
    pub attraction: AttractionParams,
    pub interp: InterpParams,
    /// `None` stops after interpolation.
    pub refine: Option<RefineParams>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        let scales = ScaleSet::default();
        PipelineParams {
            epsilon: DEFAULT_EPSILON,
            attraction: AttractionParams::for_scale_count(scales.count()),
            scales,
            interp: InterpParams::default(),
            refine: Some(RefineParams::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Segmentation,
    Skeletons,
    SparseFlow,
    Interpolation,
    Refinement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// One of the frames has no skeleton, or every point was filtered; the
    /// flow is zero.
    NoSmoke,
}

/// Everything the pipeline produced along the way.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub flow: FlowField,
    pub status: Status,
    pub mask1: Mask,
    pub mask2: Mask,
    pub skeleton1: MultiScaleSkeleton,
    pub skeleton2: MultiScaleSkeleton,
    pub sparse: Option<SparseFlow>,
    /// Dense field before refinement.
    pub interpolated: Option<FlowField>,
    pub interp_iterations: [usize; 2],
    /// Refinement energies, initial value first.
    pub energies: Vec<f64>,
}

/// Runs the pipeline; `on_stage` is called as each stage completes.
pub fn estimate_with(f1: &Frame, f2: &Frame, params: &PipelineParams, mut on_stage: impl FnMut(Stage)) -> Result<Estimate> {
    check_dims(f1.dims(), f2.dims())?;
    params.attraction.validate()?;
    params.interp.validate()?;
    if let Some(r) = &params.refine {
        r.validate()?;
    }
    let (w, h) = f1.dims();

    let mask1 = threshold_mask(f1, params.epsilon);
    let mask2 = threshold_mask(f2, params.epsilon);
    on_stage(Stage::Segmentation);

    let skeleton1 = build_skeleton(f1, &mask1, &params.scales)?;
    let skeleton2 = build_skeleton(f2, &mask2, &params.scales)?;
    on_stage(Stage::Skeletons);

    let mut estimate = Estimate {
        flow: FlowField::zeros(w, h),
        status: Status::NoSmoke,
        mask1,
        mask2,
        skeleton1,
        skeleton2,
        sparse: None,
        interpolated: None,
        interp_iterations: [0, 0],
        energies: Vec::new(),
    };
    if estimate.skeleton1.is_empty() || estimate.skeleton2.is_empty() {
        return Ok(estimate);
    }

    let sparse = estimate_sparse(&estimate.skeleton1, &estimate.skeleton2, &params.attraction)?;
    on_stage(Stage::SparseFlow);
    if sparse.is_empty() {
        estimate.sparse = Some(sparse);
        return Ok(estimate);
    }

    let dense = interpolate(&sparse, &params.interp)?;
    on_stage(Stage::Interpolation);
    estimate.sparse = Some(sparse);
    estimate.interp_iterations = dense.iterations;
    estimate.status = Status::Ok;

    match &params.refine {
        Some(rp) => {
            let outcome = refine(f1, f2, &dense.flow, rp)?;
            on_stage(Stage::Refinement);
            estimate.flow = outcome.flow;
            estimate.energies = outcome.energies;
            estimate.interpolated = Some(dense.flow);
        }
        None => {
            estimate.flow = dense.flow.clone();
            estimate.interpolated = Some(dense.flow);
        }
    }
    Ok(estimate)
}

pub fn estimate(f1: &Frame, f2: &Frame, params: &PipelineParams) -> Result<Estimate> {
    estimate_with(f1, f2, params, |_| {})
}
