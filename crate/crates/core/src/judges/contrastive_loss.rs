use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::numerics::Scalar;
use crate::{Error, Result};

/// Both directions of the symmetric image-text loss and their average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveLoss<T> {
    pub image_to_text: T,
    pub text_to_image: T,
    pub total: T,
}

struct Normalized<T> {
    unit: Array2<T>,
    norms: Array1<T>,
}

fn normalize<T: Scalar>(x: ArrayView2<T>, what: &'static str) -> Result<Normalized<T>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    let norms = x.map_axis(Axis(1), |row| row.dot(&row).sqrt());
    if norms.iter().any(|n| n.is_zero()) {
        return Err(Error::InvalidArgument(format!("zero-norm row in {what}")));
    }
    let unit = &x / &norms.view().insert_axis(Axis(1));
    Ok(Normalized { unit, norms })
}

fn log_softmax_rows<T: Scalar>(s: ArrayView2<T>) -> Array2<T> {
    let mut out = s.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = max + row.fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn check_inputs<T: Scalar>(images: ArrayView2<T>, texts: ArrayView2<T>, temperature: T) -> Result<()> {
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    let (n, m) = (images.nrows(), texts.nrows());
    if n == 0 {
        return Err(Error::InvalidArgument("no image embeddings".into()));
    }
    if m < n {
        return Err(Error::InvalidArgument(format!("{m} texts for {n} images")));
    }
    if images.ncols() != texts.ncols() {
        return Err(Error::DimensionMismatch {
            expected: images.ncols(),
            actual: texts.ncols(),
        });
    }
    Ok(())
}

/// Symmetric contrastive loss over cosine similarities divided by `temperature`.
///
/// Row `i` of `images` pairs with row `i` of `texts`; rows of `texts` past
/// the image count are hard negatives. They join the softmax of every image
/// over texts but take no part in the text-to-image direction. Each direction
/// is averaged over the `N` positive pairs.
pub fn contrastive_loss<T: Scalar>(
    images: ArrayView2<T>,
    texts: ArrayView2<T>,
    temperature: T,
) -> Result<ContrastiveLoss<T>> {
    contrastive_loss_with_grad(images, texts, temperature).map(|(loss, _, _)| loss)
}

/// The loss together with its gradient with respect to the raw, unnormalized
/// image and text embeddings.
pub fn contrastive_loss_with_grad<T: Scalar>(
    images: ArrayView2<T>,
    texts: ArrayView2<T>,
    temperature: T,
) -> Result<(ContrastiveLoss<T>, Array2<T>, Array2<T>)> {
    check_inputs(images, texts, temperature)?;
    let n = images.nrows();
    let z = normalize(images, "image embeddings")?;
    let w = normalize(texts, "text embeddings")?;
    let s = z.unit.dot(&w.unit.t()) / temperature;

    let row_logp = log_softmax_rows(s.view());
    let positives = s.slice(ndarray::s![.., ..n]);
    let col_logp = log_softmax_rows(positives.t()); // row j: text j over all images
    let nf = T::of(n as f64);
    let image_to_text = -(0..n).fold(T::zero(), |acc, i| acc + row_logp[[i, i]]) / nf;
    let text_to_image = -(0..n).fold(T::zero(), |acc, j| acc + col_logp[[j, j]]) / nf;
    let total = (image_to_text + text_to_image) / T::of(2.0);

    // dL/dS, both directions, each weighted by 1 / (2N).
    let scale = T::one() / (T::of(2.0) * nf);
    let mut grad_s = row_logp.mapv(|v| v.exp());
    for i in 0..n {
        grad_s[[i, i]] -= T::one();
    }
    for j in 0..n {
        for i in 0..n {
            let q = col_logp[[j, i]].exp() - if i == j { T::one() } else { T::zero() };
            grad_s[[i, j]] += q;
        }
    }
    grad_s.mapv_inplace(|g| g * scale / temperature);

    let grad_zu = grad_s.dot(&w.unit);
    let grad_wu = grad_s.t().dot(&z.unit);
    let grad_images = through_normalization(&z, grad_zu);
    let grad_texts = through_normalization(&w, grad_wu);
    Ok((
        ContrastiveLoss {
            image_to_text,
            text_to_image,
            total,
        },
        grad_images,
        grad_texts,
    ))
}

// d(x/|x|) applied to g: (g - u (u . g)) / |x|
fn through_normalization<T: Scalar>(x: &Normalized<T>, g: Array2<T>) -> Array2<T> {
    let mut out = g;
    for ((mut row, u), &norm) in out.rows_mut().into_iter().zip(x.unit.rows()).zip(&x.norms) {
        let along = row.dot(&u);
        row.zip_mut_with(&u, |gi, &ui| *gi = (*gi - ui * along) / norm);
    }
    out
}

/// Cosine similarity of two vectors.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let dot = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    let na = a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    let nb = b.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    dot / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{compare, numeric_input_gradient};
    use crate::seeding::rng_for;
    use ndarray::{array, concatenate};
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_for(seed, &[]);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_pair_is_zero() {
        let l = contrastive_loss(array![[0.3, 0.4]].view(), array![[-1.0, 2.0]].view(), 0.07).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn orthogonal_pairs_at_unit_temperature() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        let l = contrastive_loss(eye.view(), eye.view(), 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((l.total - expected).abs() < 1e-12);
        assert!((l.total - 0.31326168751822286).abs() < 1e-9);
    }

    #[test]
    fn hand_computed_three_by_four() {
        // Oracle: explicit per-entry sums, no matrix helpers.
        let img = random(3, 5, 1);
        let txt = random(4, 5, 2);
        let tau = 0.5;
        let unit = |r: ndarray::ArrayView1<f64>| {
            let n = r.dot(&r).sqrt();
            r.mapv(|v| v / n)
        };
        let s = |i: usize, j: usize| unit(img.row(i)).dot(&unit(txt.row(j))) / tau;
        let mut it = 0.0;
        for i in 0..3 {
            let denom: f64 = (0..4).map(|j| s(i, j).exp()).sum();
            it += -(s(i, i).exp() / denom).ln();
        }
        let mut ti = 0.0;
        for j in 0..3 {
            let denom: f64 = (0..3).map(|i| s(i, j).exp()).sum();
            ti += -(s(j, j).exp() / denom).ln();
        }
        let l = contrastive_loss(img.view(), txt.view(), tau).unwrap();
        assert!((l.image_to_text - it / 3.0).abs() < 1e-12);
        assert!((l.text_to_image - ti / 3.0).abs() < 1e-12);
        assert!((l.total - (it + ti) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn negatives_only_touch_image_to_text() {
        let img = random(4, 6, 3);
        let pos = random(4, 6, 4);
        let neg = random(8, 6, 5);
        let pool = concatenate(Axis(0), &[pos.view(), neg.view()]).unwrap();
        let a = contrastive_loss(img.view(), pos.view(), 0.07).unwrap();
        let b = contrastive_loss(img.view(), pool.view(), 0.07).unwrap();
        assert_eq!(a.text_to_image, b.text_to_image);
        assert!(b.image_to_text > a.image_to_text);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ok = array![[1.0, 0.0]];
        assert!(contrastive_loss(ok.view(), ok.view(), 0.0).is_err());
        assert!(contrastive_loss(ok.view(), ok.view(), -1.0).is_err());
        assert!(contrastive_loss(array![[0.0, 0.0]].view(), ok.view(), 1.0).is_err());
        assert!(contrastive_loss(ok.view(), array![[0.0, 0.0]].view(), 1.0).is_err());
        assert!(contrastive_loss(random(2, 2, 0).view(), ok.view(), 1.0).is_err());
    }

    #[test]
    fn large_temperature_approaches_uniform() {
        let img = random(4, 3, 8);
        let txt = random(10, 3, 9);
        let uniform = ((10f64).ln() + (4f64).ln()) / 2.0;
        let mut prev_gap = f64::INFINITY;
        for tau in [1.0, 10.0, 100.0, 1000.0] {
            let gap = (contrastive_loss(img.view(), txt.view(), tau).unwrap().total - uniform).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let img = random(3, 4, 100 + seed);
            let txt = random(7, 4, 200 + seed);
            let (_, gi, gt) = contrastive_loss_with_grad(img.view(), txt.view(), 0.3).unwrap();
            let ni = numeric_input_gradient(
                img.view(),
                |x| contrastive_loss(x, txt.view(), 0.3).unwrap().total,
                1e-5,
            );
            let nt = numeric_input_gradient(
                txt.view(),
                |x| contrastive_loss(img.view(), x, 0.3).unwrap().total,
                1e-5,
            );
            assert!(compare(gi.as_slice().unwrap(), ni.as_slice().unwrap()).max_relative_error < 1e-4);
            assert!(compare(gt.as_slice().unwrap(), nt.as_slice().unwrap()).max_relative_error < 1e-4);
        }
    }

    #[test]
    fn f32_agrees_with_f64() {
        let img = random(3, 4, 11);
        let txt = random(5, 4, 12);
        let a = contrastive_loss(img.view(), txt.view(), 0.5).unwrap().total;
        let b = contrastive_loss(img.mapv(|v| v as f32).view(), txt.mapv(|v| v as f32).view(), 0.5f32)
            .unwrap()
            .total;
        assert!((a - f64::from(b)).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn non_negative_and_permutation_invariant(seed in any::<u64>(), n in 1usize..6, extra in 0usize..6) {
            let img = random(n, 4, seed);
            let txt = random(n + extra, 4, seed ^ 1);
            let l = contrastive_loss(img.view(), txt.view(), 0.07).unwrap();
            prop_assert!(l.total >= 0.0);
            // Reverse the pair order of both sides together.
            let rev = |a: &Array2<f64>, k: usize| {
                let mut b = a.clone();
                for i in 0..k {
                    b.row_mut(i).assign(&a.row(k - 1 - i));
                }
                b
            };
            let l2 = contrastive_loss(rev(&img, n).view(), rev(&txt, n).view(), 0.07).unwrap();
            prop_assert!((l.total - l2.total).abs() < 1e-9);
        }
    }
}
