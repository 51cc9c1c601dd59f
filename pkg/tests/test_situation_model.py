from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from situsearch.datagen import SituationAnnotation, default_generator_config, generate_synthetic
from situsearch.errors import DatasetError, InsufficientDataError, InvalidInputError
from situsearch.gaussian import MultivariateGaussian, condition, rasterize_2d, uniform_map
from situsearch.geometry import BoundingBox, normalize_frame, to_normalized
from situsearch.search import Workspace, ObjectProposal, sample_proposal
from situsearch.situation_model import (
    CategorySearchDist,
    CategorySet,
    LogUniformBox,
    box_descriptor,
    box_from_descriptor,
    condition_on_workspace,
    conditioned_distribution,
    initial_distributions,
    learn,
    load_model,
    model_to_dict,
    save_model,
)

CATS = ("dog_walker", "dog", "leash")


@pytest.fixture(scope="module")
def synthetic_model():
    config = default_generator_config(seed=3)
    annotations = generate_synthetic(config, 400, rng=np.random.default_rng(3))
    return learn(annotations)


def fixed_annotation(image_id="fixed"):
    return SituationAnnotation(
        image_id=image_id,
        width=1000,
        height=1000,
        boxes={
            "dog_walker": (100.0, 100.0, 150.0, 350.0),
            "dog": (400.0, 500.0, 180.0, 120.0),
            "leash": (260.0, 330.0, 140.0, 150.0),
        },
    )


# ---------------------------------------------------------------------------
# CategorySet


def test_category_set_requires_exactly_three_unique():
    with pytest.raises(InvalidInputError):
        CategorySet(("a", "b"))
    with pytest.raises(InvalidInputError):
        CategorySet(("a", "a", "b"))
    cats = CategorySet(("a", "b", "c"))
    assert cats.pair_key("c", "a") == ("a", "c")
    assert cats.pairs() == [("a", "b"), ("a", "c"), ("b", "c")]


# ---------------------------------------------------------------------------
# learn


def test_learn_requires_enough_annotations():
    with pytest.raises(InsufficientDataError):
        learn([fixed_annotation()] * 5)


def test_learn_requires_every_category():
    incomplete = SituationAnnotation(
        image_id="x", width=100, height=100, boxes={"dog": (1.0, 1.0, 10.0, 10.0)}
    )
    with pytest.raises(DatasetError, match="dog_walker"):
        learn([incomplete] * 10)


def test_learn_duplicated_annotation_degenerates():
    ann = fixed_annotation()
    model = learn([ann] * 20)
    frame = normalize_frame(ann.width, ann.height)
    dog = to_normalized(*ann.boxes["dog"], frame)
    alpha, gamma = box_descriptor(dog, frame)
    idx = model.loc_triple.dims.index("x_dog")
    assert model.loc_triple.mean[idx] == pytest.approx(dog.cx)
    assert model.box_priors["dog"].alpha.mean == pytest.approx(alpha)
    assert model.box_priors["dog"].gamma.mean == pytest.approx(gamma)
    # covariance collapses to the ridge
    assert np.max(np.abs(model.loc_triple.cov - np.diag(np.diag(model.loc_triple.cov)))) < 1e-6


def test_learn_recovers_generator_means(synthetic_model):
    config = default_generator_config(seed=3)
    rel = np.linalg.norm(synthetic_model.loc_triple.mean - config.location.mean)
    rel /= np.linalg.norm(config.location.mean)
    assert rel < 0.05


def test_walker_area_prior_exceeds_dog(synthetic_model):
    priors = synthetic_model.box_priors
    assert priors["dog_walker"].alpha.mean > priors["dog"].alpha.mean
    assert priors["dog"].alpha.mean > priors["leash"].alpha.mean


def test_pairwise_joints_agree_with_triple_marginals(synthetic_model):
    pair = synthetic_model.loc_pair[("dog_walker", "dog")]
    idx = [0, 1, 2, 3]  # walker and dog lead the triple's dim order
    np.testing.assert_allclose(
        pair.mean, synthetic_model.loc_triple.mean[idx], rtol=1e-12
    )
    np.testing.assert_allclose(
        pair.cov, synthetic_model.loc_triple.cov[np.ix_(idx, idx)], rtol=1e-6, atol=1e-9
    )


# ---------------------------------------------------------------------------
# initial distributions


def test_initial_distributions_are_uniform_with_prior_boxes(synthetic_model):
    frame = normalize_frame(640, 480)
    dists = initial_distributions(synthetic_model, frame, cell_size=4)
    for cat in CATS:
        grid = dists[cat].location.grid
        assert np.allclose(grid, 1.0 / grid.size)
        prior = synthetic_model.box_priors[cat]
        assert dists[cat].alpha_gamma.mean[0] == prior.alpha.mean
        assert dists[cat].alpha_gamma.cov[0, 0] == pytest.approx(prior.alpha.std**2)
        assert dists[cat].alpha_gamma.cov[0, 1] == 0.0


def test_initial_distributions_follow_frame_shape(synthetic_model):
    wide = initial_distributions(synthetic_model, normalize_frame(2000, 500), cell_size=4)
    tall = initial_distributions(synthetic_model, normalize_frame(500, 2000), cell_size=4)
    w_grid = wide["dog"].location.grid
    t_grid = tall["dog"].location.grid
    assert w_grid.shape != t_grid.shape
    assert w_grid.shape[1] > w_grid.shape[0]
    assert abs(w_grid.sum() - 1) < 1e-9 and abs(t_grid.sum() - 1) < 1e-9


# ---------------------------------------------------------------------------
# conditioning on the workspace


def _workspace_with(model, detections: dict[str, BoundingBox], kind="provisional"):
    ws = Workspace(model.categories)
    for i, (cat, box) in enumerate(detections.items()):
        score = 0.3 if kind == "provisional" else 0.9
        ws.observe(ObjectProposal(cat, box, score), score, iteration=i + 1)
    return ws


def test_empty_workspace_matches_initial(synthetic_model):
    frame = normalize_frame(640, 480)
    ws = Workspace(synthetic_model.categories)
    conditioned = condition_on_workspace(synthetic_model, ws, frame, cell_size=4)
    initial = initial_distributions(synthetic_model, frame, cell_size=4)
    for cat in CATS:
        np.testing.assert_array_equal(
            conditioned[cat].location.grid, initial[cat].location.grid
        )
        np.testing.assert_array_equal(
            conditioned[cat].alpha_gamma.mean, initial[cat].alpha_gamma.mean
        )


def test_single_detection_matches_manual_pipeline(synthetic_model):
    """condition_on_workspace == condition() + rasterize_2d composed by hand."""
    frame = normalize_frame(640, 480)
    walker_box = BoundingBox(cx=-40.0, cy=10.0, w=80.0, h=190.0)
    ws = _workspace_with(synthetic_model, {"dog_walker": walker_box})
    conditioned = condition_on_workspace(synthetic_model, ws, frame, cell_size=4)

    alpha, gamma = box_descriptor(walker_box, frame)
    for cat in ("dog", "leash"):
        pair = synthetic_model.loc_pair[("dog_walker", cat)]
        loc = condition(pair, {"x_dog_walker": walker_box.cx, "y_dog_walker": walker_box.cy})
        expected_map = rasterize_2d(loc, frame, cell_size=4)
        np.testing.assert_allclose(
            conditioned[cat].location.grid, expected_map.grid, atol=1e-9
        )
        box_joint = synthetic_model.box_pair[("dog_walker", cat)]
        expected_box = condition(
            box_joint, {"alpha_dog_walker": alpha, "gamma_dog_walker": gamma}
        )
        np.testing.assert_allclose(conditioned[cat].alpha_gamma.mean, expected_box.mean)
        np.testing.assert_allclose(conditioned[cat].alpha_gamma.cov, expected_box.cov)


def test_self_detection_leaves_own_distributions_alone(synthetic_model):
    frame = normalize_frame(640, 480)
    walker_box = BoundingBox(cx=0.0, cy=0.0, w=90.0, h=200.0)
    ws = _workspace_with(synthetic_model, {"dog_walker": walker_box})
    conditioned = condition_on_workspace(synthetic_model, ws, frame, cell_size=4)
    initial = initial_distributions(synthetic_model, frame, cell_size=4)
    np.testing.assert_array_equal(
        conditioned["dog_walker"].location.grid, initial["dog_walker"].location.grid
    )
    np.testing.assert_array_equal(
        conditioned["dog_walker"].alpha_gamma.mean, initial["dog_walker"].alpha_gamma.mean
    )


def test_two_detections_concentrate_leash_map(synthetic_model):
    frame = normalize_frame(640, 480)
    walker = BoundingBox(cx=-60.0, cy=0.0, w=85.0, h=195.0)
    dog = BoundingBox(cx=45.0, cy=70.0, w=105.0, h=70.0)
    ws = _workspace_with(synthetic_model, {"dog_walker": walker, "dog": dog}, kind="final")
    conditioned = condition_on_workspace(synthetic_model, ws, frame, cell_size=4)

    one_det = conditioned_distribution(
        synthetic_model, "leash", {"dog_walker": walker}, frame, cell_size=4
    )
    prior_peak = 1.0 / one_det.location.grid.size
    assert conditioned["leash"].location.grid.max() > one_det.location.grid.max()
    assert one_det.location.grid.max() > prior_peak
    # two-detection conditional centers near the walker-dog midpoint
    grid = conditioned["leash"].location.grid
    r, c = np.unravel_index(np.argmax(grid), grid.shape)
    x = -frame.norm_width / 2 + (c + 0.5) * 4
    y = -frame.norm_height / 2 + (r + 0.5) * 4
    assert abs(x - (-60 + 45) / 2) < 25
    assert abs(y - 35) < 25


def test_provisional_and_final_condition_identically(synthetic_model):
    frame = normalize_frame(640, 480)
    box = BoundingBox(cx=10.0, cy=-5.0, w=100.0, h=180.0)
    prov = _workspace_with(synthetic_model, {"dog_walker": box}, kind="provisional")
    final = _workspace_with(synthetic_model, {"dog_walker": box}, kind="final")
    a = condition_on_workspace(synthetic_model, prov, frame, cell_size=8)
    b = condition_on_workspace(synthetic_model, final, frame, cell_size=8)
    for cat in CATS:
        np.testing.assert_array_equal(a[cat].location.grid, b[cat].location.grid)


# ---------------------------------------------------------------------------
# proposal sampling


def test_point_mass_distributions_give_deterministic_box(synthetic_model):
    frame = normalize_frame(1000, 1000)
    grid = np.zeros((10, 10))
    grid[5, 5] = 1.0
    loc = uniform_map(frame, cell_size=50)
    dist = CategorySearchDist(
        category="dog",
        location=type(loc)(frame=frame, cell_size=50, grid=grid),
        alpha_gamma=MultivariateGaussian(
            dims=("alpha_dog", "gamma_dog"),
            mean=np.array([math.log(0.25), 0.0]),
            cov=np.zeros((2, 2)),
        ),
    )
    rng = np.random.default_rng(0)
    proposals = [sample_proposal(dist, frame, rng) for _ in range(20)]
    for p in proposals:
        assert p.box.w == pytest.approx(250.0, abs=1e-3)
        assert p.box.h == pytest.approx(250.0, abs=1e-3)
        assert 0 <= p.box.cx <= 50 and 0 <= p.box.cy <= 50  # inside cell (5,5)


def test_quarter_area_box_on_square_frame():
    frame = normalize_frame(500, 500)
    box = box_from_descriptor(0.0, 0.0, math.log(0.25), math.log(1.0), frame)
    assert box.w == pytest.approx(250.0)
    assert box.h == pytest.approx(250.0)


def test_sampled_area_ratio_follows_alpha_marginal():
    frame = normalize_frame(1000, 1000)
    grid = np.zeros((20, 20))
    grid[10, 10] = 1.0
    dist = CategorySearchDist(
        category="dog",
        location=uniform_map(frame, cell_size=25).__class__(
            frame=frame, cell_size=25, grid=grid
        ),
        alpha_gamma=MultivariateGaussian(
            dims=("alpha_dog", "gamma_dog"),
            mean=np.array([math.log(0.01), 0.0]),
            cov=np.diag([0.2**2, 0.1**2]),
        ),
    )
    rng = np.random.default_rng(42)
    log_ratios = []
    for _ in range(20_000):
        p = sample_proposal(dist, frame, rng)
        log_ratios.append(math.log(p.box.area / frame.area))
    result = stats.kstest(log_ratios, cdf=stats.norm(math.log(0.01), 0.2).cdf)
    assert result.pvalue > 0.01


def test_sampled_proposals_stay_in_frame(synthetic_model):
    frame = normalize_frame(640, 480)
    dists = initial_distributions(synthetic_model, frame, cell_size=4)
    rng = np.random.default_rng(7)
    hx, hy = frame.norm_width / 2, frame.norm_height / 2
    for _ in range(500):
        for cat in CATS:
            p = sample_proposal(dists[cat], frame, rng)
            assert p.box.x0 >= -hx - 1e-9 and p.box.x1 <= hx + 1e-9
            assert p.box.y0 >= -hy - 1e-9 and p.box.y1 <= hy + 1e-9
            assert p.box.area > 0


def test_log_uniform_box_ranges():
    box = LogUniformBox()
    rng = np.random.default_rng(0)
    draws = np.array([box.sample(rng) for _ in range(5000)])
    assert draws[:, 0].min() >= math.log(0.01) and draws[:, 0].max() <= math.log(0.5)
    assert draws[:, 1].min() >= math.log(0.25) and draws[:, 1].max() <= math.log(4.0)
    # roughly uniform: quartiles near the analytic ones
    lo, hi = math.log(0.01), math.log(0.5)
    assert np.quantile(draws[:, 0], 0.5) == pytest.approx((lo + hi) / 2, abs=0.1)


# ---------------------------------------------------------------------------
# serialization


def test_model_save_load_bit_for_bit(synthetic_model, tmp_path):
    path = tmp_path / "model.json"
    save_model(synthetic_model, path)
    loaded = load_model(path)
    assert model_to_dict(loaded) == model_to_dict(synthetic_model)
    np.testing.assert_array_equal(loaded.loc_triple.mean, synthetic_model.loc_triple.mean)
    np.testing.assert_array_equal(loaded.loc_triple.cov, synthetic_model.loc_triple.cov)
    np.testing.assert_array_equal(loaded.box_triple.cov, synthetic_model.box_triple.cov)
    assert loaded.categories == synthetic_model.categories
    path2 = tmp_path / "model2.json"
    save_model(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()
