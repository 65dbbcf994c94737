use crate::tensor::{Shape, Tensor};

use super::conv::pointwise_conv;
use super::deform::square_deform_conv;
use super::offsets::{offset_gen_conv, OffsetGenerator, OffsetLayout};
use super::{ConvSpec, OpError, Variant, Weights};

/// Parameters of the split / transform / concat / shuffle block.
///
/// The transform branch is pointwise, depthwise square-deformable 3x3, then
/// pointwise, all at `C/2` channels.
#[derive(Debug, Clone)]
pub struct DcnBlockParams {
    /// `(C/2, C/2, 1, 1)`
    pub expand: Weights,
    /// `(C/2, 1, 3, 3)`
    pub depthwise: Weights,
    /// `(C/2, C/2, 1, 1)`
    pub project: Weights,
    /// Square-layout offset generator fed with the branch input.
    pub offsets: OffsetGenerator,
    pub bound: u32,
}

impl DcnBlockParams {
    pub(crate) fn depthwise_spec(&self, branch_shape: Shape) -> ConvSpec {
        ConvSpec::depthwise(branch_shape, 3).with_variant(Variant::DeformSquare(self.bound))
    }
}

pub fn dcn_block(x: &Tensor, params: &DcnBlockParams) -> Result<Tensor, OpError> {
    let c = x.shape().c;
    if !c.is_multiple_of(2) {
        return Err(OpError::OddChannels(c));
    }
    if params.offsets.layout != OffsetLayout::Square {
        return Err(OpError::LayoutMismatch {
            expected: OffsetLayout::Square,
            got: params.offsets.layout,
        });
    }
    let (identity, branch_in) = split_channels(x)?;
    let dw_spec = params.depthwise_spec(branch_in.shape());
    let off = offset_gen_conv(&branch_in, &params.offsets, &dw_spec)?;
    let expanded = pointwise_conv(&branch_in, &params.expand)?;
    let sampled = square_deform_conv(&expanded, &params.depthwise, &off, &dw_spec)?;
    let branch = pointwise_conv(&sampled, &params.project)?;
    let joined = concat_channels(&identity, &branch)?;
    channel_shuffle(&joined, 2)
}

/// First and second channel halves.
pub fn split_channels(x: &Tensor) -> Result<(Tensor, Tensor), OpError> {
    let s = x.shape();
    if !s.c.is_multiple_of(2) {
        return Err(OpError::OddChannels(s.c));
    }
    let half = s.c / 2;
    let hs = Shape { c: half, ..s };
    let chunk = half * s.plane_len();
    let mut a = Vec::with_capacity(hs.len());
    let mut b = Vec::with_capacity(hs.len());
    for item in x.data().chunks_exact(s.c * s.plane_len()) {
        a.extend_from_slice(&item[..chunk]);
        b.extend_from_slice(&item[chunk..]);
    }
    Ok((Tensor::from_vec(hs, a)?, Tensor::from_vec(hs, b)?))
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, OpError> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(OpError::Shape(format!("cannot concatenate {sa} and {sb}")));
    }
    let out = Shape { c: sa.c + sb.c, ..sa };
    let mut data = Vec::with_capacity(out.len());
    let (ca, cb) = (sa.c * sa.plane_len(), sb.c * sb.plane_len());
    for (x, y) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        data.extend_from_slice(x);
        data.extend_from_slice(y);
    }
    Ok(Tensor::from_vec(out, data)?)
}

/// Channel shuffle: view channels as `(groups, C/groups)` and transpose.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor, OpError> {
    let s = x.shape();
    if groups == 0 || !s.c.is_multiple_of(groups) {
        return Err(OpError::Shape(format!(
            "{} channels do not split into {groups} groups",
            s.c
        )));
    }
    let per = s.c / groups;
    let plane = s.plane_len();
    let mut out = Tensor::zeros(s)?;
    for n in 0..s.n {
        for g in 0..groups {
            for i in 0..per {
                let src = s.index(n, g * per + i, 0, 0);
                let dst = s.index(n, i * groups + g, 0, 0);
                out.data_mut()[dst..dst + plane].copy_from_slice(&x.data()[src..src + plane]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::standard_conv;
    use crate::tensor::SeedSpec;

    fn channels_as_values(c: usize) -> Tensor {
        let s = Shape::new(1, c, 1, 1).unwrap();
        Tensor::from_vec(s, (0..c).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn shuffle_two_groups() {
        let y = channel_shuffle(&channels_as_values(4), 2).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 1.0, 3.0]);
        let y = channel_shuffle(&channels_as_values(6), 3).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 4.0, 1.0, 3.0, 5.0]);
        assert!(channel_shuffle(&channels_as_values(5), 2).is_err());
    }

    #[test]
    fn split_then_concat_round_trips() {
        let x = Tensor::random(Shape::new(2, 4, 3, 3).unwrap(), SeedSpec::uniform(1, 0.0, 1.0)).unwrap();
        let (a, b) = split_channels(&x).unwrap();
        assert_eq!(concat_channels(&a, &b).unwrap(), x);
    }

    fn zero_params(half: usize) -> DcnBlockParams {
        let z = |n, c, k| Weights::new(Tensor::zeros(Shape::new(n, c, k, k).unwrap()).unwrap());
        DcnBlockParams {
            expand: z(half, half, 1),
            depthwise: z(half, 1, 3),
            project: z(half, half, 1),
            offsets: OffsetGenerator::zeros(half, 3, OffsetLayout::Square).unwrap(),
            bound: 7,
        }
    }

    #[test]
    fn zero_branch_keeps_identity_half() {
        let x = Tensor::random(Shape::new(1, 4, 5, 5).unwrap(), SeedSpec::uniform(2, -1.0, 1.0)).unwrap();
        let y = dcn_block(&x, &zero_params(2)).unwrap();
        let (identity, _) = split_channels(&x).unwrap();
        let zeros = Tensor::zeros(identity.shape()).unwrap();
        let expect = channel_shuffle(&concat_channels(&identity, &zeros).unwrap(), 2).unwrap();
        assert_eq!(y, expect);
    }

    #[test]
    fn odd_channels_rejected() {
        let x = Tensor::zeros(Shape::new(1, 3, 4, 4).unwrap()).unwrap();
        assert!(matches!(dcn_block(&x, &zero_params(1)), Err(OpError::OddChannels(3))));
    }

    #[test]
    fn zero_offsets_in_block_match_standard_branch() {
        // offset generator with zero weights and no bias yields d = 0; a bias of
        // 1 yields d = 1, i.e. a regular depthwise 3x3 in the branch
        let x = Tensor::random(Shape::new(1, 4, 6, 6).unwrap(), SeedSpec::uniform(3, -1.0, 1.0)).unwrap();
        let r = |shape: (usize, usize, usize), seed| {
            Weights::new(
                Tensor::random(
                    Shape::new(shape.0, shape.1, shape.2, shape.2).unwrap(),
                    SeedSpec::uniform(seed, -1.0, 1.0),
                )
                .unwrap(),
            )
        };
        let mut p = zero_params(2);
        p.expand = r((2, 2, 1), 4);
        p.depthwise = r((2, 1, 3), 5);
        p.project = r((2, 2, 1), 6);
        p.offsets.bias = vec![1.0];
        let y = dcn_block(&x, &p).unwrap();

        let (id, br) = split_channels(&x).unwrap();
        let e = pointwise_conv(&br, &p.expand).unwrap();
        let d = standard_conv(&e, &p.depthwise, &ConvSpec::depthwise(e.shape(), 3)).unwrap();
        let q = pointwise_conv(&d, &p.project).unwrap();
        let expect = channel_shuffle(&concat_channels(&id, &q).unwrap(), 2).unwrap();
        assert_eq!(y, expect);
    }
}
