"""Compiled inner loops: fixed-step RK4 of the coupled beam/mass system and
the streaming demodulator that runs alongside it.

Parameter vector layout (``prm``)::

    0 omega0        beam angular frequency (rad/s)
    1 beam_damp     omega0 / Q
    2 beta          cubic stiffness (1/(m^2 s^2))
    3 beam_force    coupling * eps0 * A / (2 m_eff)  -> accel = beam_force * v^2 / gap^2
    4 rest_gap      m
    5 mass_w2       k / m
    6 mass_damp     omega_m / Q_m
    7 mass_force    coupling * eps0 * A / (4 m)      -> accel = mass_force * v_env^2 / rest_gap^2
    8 travel        bumper limit (m)

Status codes returned by the kernels: 0 ok, 1 gap collapse, 2 overflow.
"""

import math

from numba import njit

OK = 0
GAP_COLLAPSE = 1
OVERFLOW = 2

STATE_LIMIT = 1.0  # m or m/s magnitude treated as blow-up


@njit(cache=True, inline="always")
def _beam_accel(y, v, xm, drive_sq, omega0, damp, beta, bforce, gap0):
    g = gap0 - xm - y
    return -damp * v - omega0 * omega0 * y - beta * y * y * y + bforce * drive_sq / (g * g), g


@njit(cache=True, inline="always")
def _biquad(x, sos, z, j):
    out = sos[j, 0] * x + z[j, 0]
    z[j, 0] = sos[j, 1] * x - sos[j, 4] * out + z[j, 1]
    z[j, 1] = sos[j, 2] * x - sos[j, 5] * out
    return out


@njit(cache=True)
def integrate_slots(
    state,
    prm,
    cos_half,
    phase,
    v_env,
    accel,
    steps_per_slot,
    dt,
    bp_sos,
    lp_sos,
    z_bp,
    z_i,
    z_q,
    env_out,
    freeze_mass,
    trace,
):
    """Advance the system through ``len(v_env)`` drive slots.

    During slot ``s`` the drive is ``v_env[s] * cos(omega_d t)`` and the proof
    mass feels ``accel[s]``. ``cos_half`` tabulates ``cos(omega_d t)`` on the
    half-step grid over one drive period, so ``phase`` (integer step index
    within the period) carries the carrier phase between calls. The beam
    displacement is band-passed, mixed with the 2*omega_d carrier and
    low-passed; the envelope ``2|I + jQ|`` at the end of each slot goes to
    ``env_out[s]``. When ``trace`` is non-empty it receives the beam
    displacement at every step (debug dumps).

    Returns ``(phase, status)``.
    """
    omega0 = prm[0]
    damp = prm[1]
    beta = prm[2]
    bforce = prm[3]
    gap0 = prm[4]
    mw2 = prm[5]
    mdamp = prm[6]
    mforce = prm[7]
    travel = prm[8]
    y = state[0]
    v = state[1]
    x = state[2]
    u = state[3]
    n_half = cos_half.shape[0]
    n_period = n_half // 2
    n_bp = bp_sos.shape[0]
    n_lp = lp_sos.shape[0]
    record = trace.shape[0] > 0
    h = dt
    i_out = 0.0
    q_out = 0.0
    k_trace = 0
    for s in range(v_env.shape[0]):
        vs = v_env[s]
        a_ext = accel[s]
        if freeze_mass:
            mass_acc_const = 0.0
        else:
            mass_acc_const = a_ext + mforce * vs * vs / (gap0 * gap0)
        for _ in range(steps_per_slot):
            i0 = 2 * phase
            c0 = cos_half[i0] * vs
            c1 = cos_half[i0 + 1] * vs
            c2 = cos_half[(i0 + 2) % n_half] * vs
            d0 = c0 * c0
            d1 = c1 * c1
            d2 = c2 * c2

            ay1, g1 = _beam_accel(y, v, x, d0, omega0, damp, beta, bforce, gap0)
            y2 = y + 0.5 * h * v
            v2 = v + 0.5 * h * ay1
            if freeze_mass:
                ax1 = 0.0
                x2 = x
                u2 = 0.0
            else:
                ax1 = -mdamp * u - mw2 * x + mass_acc_const
                x2 = x + 0.5 * h * u
                u2 = u + 0.5 * h * ax1
            ay2, g2 = _beam_accel(y2, v2, x2, d1, omega0, damp, beta, bforce, gap0)
            y3 = y + 0.5 * h * v2
            v3 = v + 0.5 * h * ay2
            if freeze_mass:
                ax2 = 0.0
                x3 = x
                u3 = 0.0
            else:
                ax2 = -mdamp * u2 - mw2 * x2 + mass_acc_const
                x3 = x + 0.5 * h * u2
                u3 = u + 0.5 * h * ax2
            ay3, g3 = _beam_accel(y3, v3, x3, d1, omega0, damp, beta, bforce, gap0)
            y4 = y + h * v3
            v4 = v + h * ay3
            if freeze_mass:
                ax3 = 0.0
                x4 = x
                u4 = 0.0
            else:
                ax3 = -mdamp * u3 - mw2 * x3 + mass_acc_const
                x4 = x + h * u3
                u4 = u + h * ax3
            ay4, g4 = _beam_accel(y4, v4, x4, d2, omega0, damp, beta, bforce, gap0)
            if g1 <= 0.0 or g2 <= 0.0 or g3 <= 0.0 or g4 <= 0.0:
                state[0] = y
                state[1] = v
                state[2] = x
                state[3] = u
                return phase, GAP_COLLAPSE
            y += h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
            v += h / 6.0 * (ay1 + 2.0 * ay2 + 2.0 * ay3 + ay4)
            if not freeze_mass:
                ax4 = -mdamp * u4 - mw2 * x4 + mass_acc_const
                x += h / 6.0 * (u + 2.0 * u2 + 2.0 * u3 + u4)
                u += h / 6.0 * (ax1 + 2.0 * ax2 + 2.0 * ax3 + ax4)
                if x > travel:
                    x = travel
                    u = 0.0
                elif x < -travel:
                    x = -travel
                    u = 0.0
            if not (abs(y) < STATE_LIMIT and abs(v) < STATE_LIMIT * 1e7 and abs(x) < STATE_LIMIT):
                state[0] = y
                state[1] = v
                state[2] = x
                state[3] = u
                return phase, OVERFLOW
            phase += 1
            if phase >= n_period:
                phase -= n_period
            if (gap0 - x - y) <= 0.0:
                state[0] = y
                state[1] = v
                state[2] = x
                state[3] = u
                return phase, GAP_COLLAPSE

            # demodulation at 2*omega_d: index 4*phase on the half-step grid
            w = y
            for j in range(n_bp):
                w = _biquad(w, bp_sos, z_bp, j)
            k_mix = (4 * phase) % n_half
            c_mix = cos_half[k_mix]
            s_mix = cos_half[(k_mix + 3 * n_half // 4) % n_half]  # sin = cos shifted by -pi/2
            i_out = w * c_mix
            q_out = w * s_mix
            for j in range(n_lp):
                i_out = _biquad(i_out, lp_sos, z_i, j)
                q_out = _biquad(q_out, lp_sos, z_q, j)
            if record:
                if k_trace < trace.shape[0]:
                    trace[k_trace] = y
                    k_trace += 1
        env_out[s] = 2.0 * math.sqrt(i_out * i_out + q_out * q_out)
    state[0] = y
    state[1] = v
    state[2] = x
    state[3] = u
    return phase, OK


@njit(cache=True)
def drive_cycles(state, prm, omega_d, v0, mass_disp, n_settle, n_measure, steps_per_period):
    """Beam under a constant-amplitude drive with the proof mass held at ``mass_disp``.

    Integrates ``n_settle`` periods of the 2*omega_d forcing, then measures
    half the peak-to-peak beam displacement over ``n_measure`` periods.

    Returns ``(amplitude, status)``.
    """
    omega0 = prm[0]
    damp = prm[1]
    beta = prm[2]
    bforce = prm[3]
    gap0 = prm[4]
    y = state[0]
    v = state[1]
    t_force = math.pi / omega_d
    h = t_force / steps_per_period
    ymax = -1e300
    ymin = 1e300
    n_total = (n_settle + n_measure) * steps_per_period
    n_start = n_settle * steps_per_period
    for n in range(n_total):
        t = n * h
        c0 = v0 * math.cos(omega_d * t)
        c1 = v0 * math.cos(omega_d * (t + 0.5 * h))
        c2 = v0 * math.cos(omega_d * (t + h))
        ay1, g1 = _beam_accel(y, v, mass_disp, c0 * c0, omega0, damp, beta, bforce, gap0)
        y2 = y + 0.5 * h * v
        v2 = v + 0.5 * h * ay1
        ay2, g2 = _beam_accel(y2, v2, mass_disp, c1 * c1, omega0, damp, beta, bforce, gap0)
        y3 = y + 0.5 * h * v2
        v3 = v + 0.5 * h * ay2
        ay3, g3 = _beam_accel(y3, v3, mass_disp, c1 * c1, omega0, damp, beta, bforce, gap0)
        y4 = y + h * v3
        v4 = v + h * ay3
        ay4, g4 = _beam_accel(y4, v4, mass_disp, c2 * c2, omega0, damp, beta, bforce, gap0)
        if g1 <= 0.0 or g2 <= 0.0 or g3 <= 0.0 or g4 <= 0.0:
            state[0] = y
            state[1] = v
            return 0.0, GAP_COLLAPSE
        y += h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v += h / 6.0 * (ay1 + 2.0 * ay2 + 2.0 * ay3 + ay4)
        if not abs(y) < STATE_LIMIT:
            state[0] = y
            state[1] = v
            return 0.0, OVERFLOW
        if n >= n_start:
            if y > ymax:
                ymax = y
            if y < ymin:
                ymin = y
    state[0] = y
    state[1] = v
    return 0.5 * (ymax - ymin), OK


@njit(cache=True)
def free_beam_energy_drift(y0, omega0, beta, n_periods, steps_per_period):
    """Undamped, undriven Duffing beam: max relative deviation of
    ``0.5 (v^2 + omega0^2 y^2) + 0.25 beta y^4`` (per unit mass) from its
    initial value over ``n_periods`` linear periods."""
    y = y0
    v = 0.0
    e0 = 0.5 * omega0 * omega0 * y * y + 0.25 * beta * y**4
    h = 2.0 * math.pi / omega0 / steps_per_period
    worst = 0.0
    for _ in range(n_periods * steps_per_period):
        a1 = -omega0 * omega0 * y - beta * y**3
        y2 = y + 0.5 * h * v
        v2 = v + 0.5 * h * a1
        a2 = -omega0 * omega0 * y2 - beta * y2**3
        y3 = y + 0.5 * h * v2
        v3 = v + 0.5 * h * a2
        a3 = -omega0 * omega0 * y3 - beta * y3**3
        y4 = y + h * v3
        v4 = v + h * a3
        a4 = -omega0 * omega0 * y4 - beta * y4**3
        y += h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        e = 0.5 * (v * v + omega0 * omega0 * y * y) + 0.25 * beta * y**4
        d = abs(e - e0) / e0
        if d > worst:
            worst = d
    return worst
