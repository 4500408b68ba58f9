use nalgebra::DVector;

use super::SimError;

/// Classical fourth-order Runge–Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        let z = DVector::zeros(dim);
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    /// Advances `y` from `t` to `t + h` in place.
    pub fn step<F>(&mut self, mut rhs: F, t: f64, y: &mut DVector<f64>, h: f64) -> Result<(), SimError>
    where
        F: FnMut(f64, &DVector<f64>, &mut DVector<f64>) -> Result<(), SimError>,
    {
        if y.len() != self.k1.len() {
            *self = Self::new(y.len());
        }
        let half = 0.5 * h;
        rhs(t, y, &mut self.k1)?;

        self.tmp.copy_from(y);
        self.tmp.axpy(half, &self.k1, 1.0);
        rhs(t + half, &self.tmp, &mut self.k2)?;

        self.tmp.copy_from(y);
        self.tmp.axpy(half, &self.k2, 1.0);
        rhs(t + half, &self.tmp, &mut self.k3)?;

        self.tmp.copy_from(y);
        self.tmp.axpy(h, &self.k3, 1.0);
        rhs(t + h, &self.tmp, &mut self.k4)?;

        let sixth = h / 6.0;
        for i in 0..y.len() {
            y[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState { time: t + h });
        }
        Ok(())
    }
}

/// One RK4 step of `ẏ = rhs(t, y)`; errors if the result is not finite.
pub fn rk4_step<F>(mut rhs: F, state: &DVector<f64>, t: f64, h: f64) -> Result<DVector<f64>, SimError>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(h > 0.0) {
        return Err(SimError::InvalidScenario(format!("step h = {h} must be positive")));
    }
    let mut y = state.clone();
    Rk4::new(y.len()).step(
        |tt, yy, dy| {
            dy.copy_from(&rhs(tt, yy));
            Ok(())
        },
        t,
        &mut y,
        h,
    )?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_state_unchanged() {
        let y0 = DVector::from_column_slice(&[1.0, -2.0, 3.5]);
        let y1 = rk4_step(|_, y| DVector::zeros(y.len()), &y0, 0.0, 0.1).unwrap();
        assert_eq!(y0, y1);
    }

    #[test]
    fn exponential_decay_one_step() {
        let y0 = DVector::from_element(1, 1.0);
        let y1 = rk4_step(|_, y| -y, &y0, 0.0, 0.1).unwrap();
        assert!((y1[0] - (-0.1f64).exp()).abs() <= 1e-7);
        assert!((y1[0] - 0.904837).abs() <= 1e-6);
    }

    #[test]
    fn non_finite_detected() {
        let y0 = DVector::from_element(1, 1.0);
        let err = rk4_step(|_, _| DVector::from_element(1, f64::NAN), &y0, 0.0, 0.1).unwrap_err();
        assert!(matches!(err, SimError::NonFiniteState { .. }));
        assert!(rk4_step(|_, y| -y, &y0, 0.0, 0.0).is_err());
    }

    #[test]
    fn time_argument_reaches_stages() {
        // ẏ = t integrates exactly: y(h) = h²/2.
        let y0 = DVector::from_element(1, 0.0);
        let y1 = rk4_step(|t, _| DVector::from_element(1, t), &y0, 0.0, 0.5).unwrap();
        assert!((y1[0] - 0.125).abs() < 1e-15);
    }
}
