//! HU-based foreground masking for 3D masked image modeling.
//!
//! The pipeline reads a CT volume ([`nifti`]), windows it into `[0, 1]`
//! ([`intensity`]), cuts it into a grid of subvolumes ([`partition`]), and
//! hides foreground subvolumes according to a seeded [`masking::MaskPlan`].
//! [`roi`] measures how much more information foreground regions carry than
//! background, and [`pretext`] trains a small reconstruction model whose loss
//! only sees the masked subvolumes.

pub mod error;
pub mod intensity;
pub mod masking;
pub mod nifti;
pub mod partition;
pub mod phantom;
pub mod pretext;
pub mod rng;
pub mod roi;
pub mod volume;

pub use error::{Error, Result};
pub use intensity::{normalize, Histogram, WindowSpec};
pub use masking::{build_mask_plan, MaskConfig, MaskPlan, MaskStrategy};
pub use partition::{plan_grid, GridPlan, Subvolume};
pub use phantom::{generate_phantom, PhantomSpec};
pub use volume::{IntensityUnit, LabelVolume, Shape3, Volume3D};
