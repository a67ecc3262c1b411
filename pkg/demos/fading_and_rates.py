"""Walk through the physical layer: correlated fading, path loss and what a
jammer does to the achievable rate on one link.

Run:  python3 demos/fading_and_rates.py
"""
import numpy as np

from slicesim.radio import (FadingField, Geometry, RadioParams, bs_user_power,
                            channel_rate_table, evolve_fading, jakes_rho,
                            jam_user_power, path_loss)


def main():
    params = RadioParams(num_channels=4, num_base_stations=2, num_users=3,
                         link_budget_gain=4e5)
    rng = np.random.default_rng(0)

    rho = jakes_rho(params.doppler_hz, params.slot_s)
    print(f"slot-to-slot fading correlation rho = {rho:.6f}")
    print("(1 Hz Doppler, 20 ms slots: the channel barely moves per slot)\n")

    field = FadingField.initial(2, 3, 4, rho, rng)
    h0 = field.bs_user[0, 0, 0]
    samples = []
    for _ in range(4000):
        field = evolve_fading(field, rng)
        samples.append(field.bs_user[0, 0, 0])
    samples = np.array(samples)
    power = np.abs(samples) ** 2
    lag1 = np.corrcoef(power[:-1], power[1:])[0, 1]
    print(f"started at h = {h0:.3f}")
    print(f"mean |h|^2 over 4000 slots = {power.mean():.3f} (unit Rayleigh power)")
    print(f"measured lag-1 power correlation = {lag1:.3f} vs rho^2 = {rho**2:.3f}\n")

    print("path loss vs distance (50 m mast):")
    for d_km in (0.05, 0.5, 1.0, 2.5):
        loss = path_loss(np.array([d_km]), params.bs_height_m,
                         params.path_loss_exponent)[0]
        print(f"  {d_km:5.2f} km -> {loss:.3e}")

    # one user, every channel, with and without a jammer parked nearby
    geom = Geometry(bs_xy=np.array([[0.0, 0.0], [3.0, 0.0]]),
                    user_xy=np.array([[0.4, 0.1], [1.2, -0.3], [2.8, 0.2]]),
                    jammer_xy=np.array([1.5, 0.0]))
    sig = bs_user_power(params, geom, field)
    jam = jam_user_power(params, geom, field)
    solo = np.zeros((2, 4), dtype=np.uint8)
    solo[0] = 1                                    # only cell 0 transmits
    both = np.ones((2, 4), dtype=np.uint8)         # full frequency reuse
    clean = channel_rate_table(sig, solo, None, None)
    reuse = channel_rate_table(sig, both, None, None)
    jammed = channel_rate_table(sig, both, jam, np.ones(4, dtype=np.uint8))
    print("\nper-channel rate for user 0 served by cell 0 (bit/s/Hz):")
    print("  cell 0 alone          :", np.round(clean[0, 0], 3))
    print("  both cells transmit   :", np.round(reuse[0, 0], 3))
    print("  ... and all jammed    :", np.round(jammed[0, 0], 3))
    print("\ncross-cell interference plus the jammer eat most of the link.")


if __name__ == "__main__":
    main()
