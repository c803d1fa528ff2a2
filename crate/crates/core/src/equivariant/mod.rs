//! Equivariant correlation layers, tensor-ring kernels and the invariant integration layer.

mod correlate;
mod kernel;
mod layers;
mod tensor_ring;

pub use correlate::{
    s2_correlate, s2_correlate_backward, s2_correlate_core, s2_correlate_direct, s2_product, so3_correlate,
    so3_correlate_backward, so3_correlate_core, so3_correlate_direct, so3_product,
};
pub use kernel::{
    kernel_spectrum, kernel_spectrum_grad, s2_kernel_modes, so3_kernel_modes, Kernel, KernelStorage, RealSpectralMap,
};
pub use layers::{
    invariant_integrate, relu, Actnorm, Batch, BatchNorm, EquivariantStack, Layer, LayerCache, Mode, NormKind, S2Conv,
    SO3Conv, StackConfig, Tape,
};
pub use tensor_ring::{tr_materialize, tr_param_count, TensorRingKernel};
