/// Huber penalty of a residual norm and its IRLS weight `ρ'(r) / r`.
///
/// `delta = +∞` turns the loss into plain least squares.
pub fn huber_loss(r: f64, delta: f64) -> (f64, f64) {
    let a = r.abs();
    if a <= delta {
        (0.5 * a * a, 1.0)
    } else {
        (delta * (a - 0.5 * delta), delta / a)
    }
}
