from datetime import timedelta

import hypothesis.strategies as st
from hypothesis import settings

from sbneuro.sbmodel import GATE_LENGTHS, BiasPoint, DeviceParams

settings.register_profile("default", max_examples=60, deadline=timedelta(seconds=5))
settings.load_profile("default")


@st.composite
def device_params(draw):
    phi_min = draw(st.floats(0.0, 0.3))
    return DeviceParams(
        phi_min=phi_min,
        phi_b0=phi_min + draw(st.floats(0.0, 0.9)),
        gamma_tg=draw(st.floats(0.01, 0.3)),
        gamma_bg=draw(st.floats(-0.1, 0.1)),
        v_t0=draw(st.floats(-1.0, 1.0)),
        n_ideality=draw(st.floats(1.0, 10.0)),
        rho_sheet=draw(st.floats(1e2, 1e9)),
        r_sd_ext=draw(st.floats(0.0, 1e6)),
        l_g=draw(st.sampled_from(GATE_LENGTHS)),
    )


biases = st.builds(BiasPoint, st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
