//! Butcher tableaus of the embedded explicit pairs.

/// Embedded explicit Runge-Kutta pair: `b` propagates, `b - bh` estimates
/// the local error.
#[derive(Debug, Clone, Copy)]
pub struct Tableau {
    pub c: &'static [f64],
    pub a: &'static [&'static [f64]],
    pub b: &'static [f64],
    pub bh: &'static [f64],
    /// Order of the propagating weights.
    pub order: u32,
    /// Order of the embedded weights.
    pub embedded_order: u32,
}

impl Tableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [&[f64]; 7] = [
    &[],
    &[0.2],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_BH: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Dormand-Prince 5(4).
pub const DP54: Tableau = Tableau { c: &DP_C, a: &DP_A, b: &DP_B, bh: &DP_BH, order: 5, embedded_order: 4 };

// Verner's "efficient" 9(8) pair, 16 stages.
const V98_C: [f64; 16] = [
    0.0,
    0.3571e-1,
    9.906028091267415e-2,
    0.1485904213690112,
    0.6134,
    0.2327359473605627,
    0.5538640526394373,
    0.6555,
    0.491625,
    0.6858e-1,
    0.253,
    0.6620641795412046,
    0.8309,
    0.8998,
    1.0,
    1.0,
];
const V98_A_ROWS: [[f64; 16]; 16] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.3571e-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-3.833735636677017e-2, 0.13739763727944432, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.71476053422528e-2, 0.0, 0.11144281602675842, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        2.674764429871505,
        0.0,
        -9.982382134885293,
        7.921017705013789,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        5.242104050577351e-2,
        0.0,
        0.0,
        0.17969111891759532,
        6.237879371938568e-4,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.15924922236476322,
        0.0,
        0.0,
        -0.4298429877241087,
        6.665266542726088e-2,
        0.757805152571522,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        7.283333333333333e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.33593445906651037,
        0.2467322076001563,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        7.29755859375e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.33480097296993333,
        0.11841582390506665,
        -3.45673828125e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.9112136634520964e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        3.983857361308652e-2,
        0.10696752889393549,
        -2.1742591654586477e-2,
        -0.10559564748695649,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -2.7079888186412805e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        3.33e-2,
        -0.16455260700360572,
        3.42826630649739e-2,
        0.1585264064439221,
        0.2185234256811225,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        5.5846577691088625e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        9.166533166672539e-2,
        0.2392399655523627,
        1.023834712248415e-2,
        -2.6793313228595426e-3,
        4.2356241814742845e-2,
        0.2253970470166604,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -0.4802510512725196,
        0.0,
        0.0,
        0.0,
        0.0,
        -6.3596101625559305,
        -0.2762313898040841,
        -6.500796633979847,
        0.5734765877040957,
        1.3471259948681389,
        5.936840409706221,
        6.590346245333925,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.3307533067671401,
        0.0,
        0.0,
        0.0,
        0.0,
        5.956207776829962,
        -0.48683164004815277,
        4.462055288206771,
        0.7410258231442072,
        -0.7118192034575913,
        -5.454619594516665,
        -4.14080372924471,
        0.20383197231903866,
        0.0,
        0.0,
        0.0,
    ],
    [
        -0.5847111122998945,
        0.0,
        0.0,
        0.0,
        0.0,
        -12.41268417116267,
        1.360245445660928,
        -22.426105311118683,
        -0.8828857055865458,
        1.7701551285382304,
        12.158096519185339,
        22.230375204077607,
        -0.6634483760201249,
        0.45096237872581374,
        0.0,
        0.0,
    ],
    [
        1.9405755498106487,
        0.0,
        0.0,
        0.0,
        0.0,
        21.977984081145564,
        0.8230747326984729,
        68.16441683626354,
        -3.117097463620267,
        -4.56884102182244,
        -18.74190987126265,
        -66.57711839637832,
        1.0989155531654418,
        0.0,
        0.0,
        0.0,
    ],
];
const V98_B: [f64; 16] = [
    1.5006690149797247e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.0551809927463813,
    0.2384947263782183,
    0.12881517742829915,
    0.22766231110462157,
    1.2295325874375174,
    4.624976662810384e-2,
    0.13861963193662938,
    3.0800101683194355e-2,
    0.0,
];
const V98_BH: [f64; 16] = [
    1.8972105324811014e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    3.4081103145494938,
    0.1260323883820921,
    0.11883750634511497,
    0.24910419978386875,
    -3.2699662199289783,
    0.3023798100228883,
    0.0,
    0.0,
    4.652989552070924e-2,
];

const V98_A: [&[f64]; 16] = [
    &V98_A_ROWS[0],
    &V98_A_ROWS[1],
    &V98_A_ROWS[2],
    &V98_A_ROWS[3],
    &V98_A_ROWS[4],
    &V98_A_ROWS[5],
    &V98_A_ROWS[6],
    &V98_A_ROWS[7],
    &V98_A_ROWS[8],
    &V98_A_ROWS[9],
    &V98_A_ROWS[10],
    &V98_A_ROWS[11],
    &V98_A_ROWS[12],
    &V98_A_ROWS[13],
    &V98_A_ROWS[14],
    &V98_A_ROWS[15],
];

/// Verner 9(8).
pub const V98: Tableau = Tableau { c: &V98_C, a: &V98_A, b: &V98_B, bh: &V98_BH, order: 9, embedded_order: 8 };
