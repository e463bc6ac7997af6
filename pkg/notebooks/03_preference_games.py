# %% [markdown]
# # Preferences change the game
#
# Infection loads alone make the joint ConfVacc cell the only equilibrium.
# Once groups also care about which policies they find acceptable, other
# cells can become stable.  This walk-through uses the bundled reference
# load tables, so it runs in a second.

# %%
import numpy as np

from netsir import games
from netsir.games import (
    ADDITIVE_PENALTY,
    HANDS_OFF,
    MEDICAL_FIRST,
    PUBLISHED,
    PreferenceProfile,
    cell_names,
    compound_payoff,
    intensity_sweep,
    load_fixture,
    pure_nash,
    ranking_weights,
)

np.set_printoptions(precision=3, suppress=True)

# %% [markdown]
# ## From a ranking to weights
#
# Intensity 1 means indifference.  Larger intensities sharpen the weights.

# %%
for I in (1, 3, 5, 9):
    print(f"I={I}: penalty {ranking_weights(PreferenceProfile(HANDS_OFF, I))}  "
          f"priority {ranking_weights(PreferenceProfile(HANDS_OFF, I), orientation='priority')}")

# %% [markdown]
# ## One compounded table

# %%
hom, base = load_fixture("homogeneous")
cp = compound_payoff(hom, PreferenceProfile(HANDS_OFF, 3), PreferenceProfile(MEDICAL_FIRST, 3),
                     (1, 1), baseline=base)
print("group 0 cost\n", cp.cells[..., 0])
print("group 1 cost\n", cp.cells[..., 1])
print("equilibria", cell_names(cp.nash()))
ref, _ = load_fixture("compounded")
print(f"largest difference to the reference cost table {np.abs(cp.cells - ref).max():.4f}")

# %% [markdown]
# ## Sweeping intensities
#
# Equilibria are grouped into rectangles of intensity pairs.

# %%
blk, bbase = load_fixture("block")
nmap = intensity_sweep({"hom": hom, "block": blk}, range(3, 8), baselines={"hom": base, "block": bbase})
for (topo, obj, (i, j)), rects in nmap.coalesced().items():
    spans = ", ".join(f"({games.format_range(a)}, {games.format_range(b)})" for a, b in rects)
    print(f"{topo:5s} [{obj[0]},{obj[1]}] {games.STRATEGIES[i]:>8s},{games.STRATEGIES[j]:<8s} {spans}")

# %% [markdown]
# ## The other sign convention
#
# Reading the preference term as a penalty on disliked policies gives a
# different map.  Counting grid points that agree with the reference map:

# %%
ref_map = games.published_nash_map()
for scheme in (PUBLISHED, ADDITIVE_PENALTY):
    m = intensity_sweep({"hom": hom, "block": blk}, range(3, 8), scheme=scheme,
                        baselines={"hom": base, "block": bbase})
    hits = sum(m.points[k] == v for k, v in ref_map.points.items())
    print(f"{scheme.name:17s} {hits}/{len(ref_map.points)}; hom [1,1] (3,3): "
          f"{cell_names(m.cells('hom', '11', 3, 3))}")
print("pure loads:", cell_names(pure_nash(hom)))
