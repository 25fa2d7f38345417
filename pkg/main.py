from typing import List, Optional

import numpy as np
import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from linalg import NotPositiveDefinite
from sensitivity import SchurSingular, assemble_jacobian, detect_active
from solver import ConvexInstance, ExplicitSpd, ScaledIdentity, SolveStatus, SolverError, kkt_report, solve
from train import grad_pear
from verify import verify_all

app = FastAPI(title="PEAR Service")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class InstanceRequest(BaseModel):
    """
    A QP posted as JSON. Infinite bounds are sent as null.
    Exactly one of `H` (explicit SPD) or `lambda_smooth` (lam * I) is given.
    """
    cost: List[float]
    H: Optional[List[List[float]]] = None
    lambda_smooth: Optional[float] = None
    A: Optional[List[List[float]]] = None
    b: Optional[List[float]] = None
    G: Optional[List[List[float]]] = None
    l: Optional[List[Optional[float]]] = None
    u: Optional[List[Optional[float]]] = None
    maximize: bool = False


class GradientRequest(InstanceRequest):
    true_cost: List[float]
    beta: float = 0.0


class VerifyRequest(BaseModel):
    seed: int = 0


def _bounds(values: Optional[List[Optional[float]]], fill: float) -> Optional[np.ndarray]:
    if values is None:
        return None
    return np.array([fill if v is None else v for v in values], dtype=float)


def build_instance(request: InstanceRequest) -> ConvexInstance:
    """Translate a request into an instance with an empty cost slot."""
    n = len(request.cost)
    if (request.H is None) == (request.lambda_smooth is None):
        raise ValueError("give exactly one of H or lambda_smooth")
    curvature = (ExplicitSpd(np.asarray(request.H, dtype=float)) if request.H is not None
                 else ScaledIdentity(request.lambda_smooth))
    return ConvexInstance(
        n=n,
        curvature=curvature,
        A=np.asarray(request.A, dtype=float) if request.A else None,
        b=np.asarray(request.b, dtype=float) if request.b else None,
        G=np.asarray(request.G, dtype=float) if request.G else None,
        l=_bounds(request.l, -np.inf),
        u=_bounds(request.u, np.inf),
        cost_sign=-1.0 if request.maximize else 1.0,
        name="posted",
    )


def _finite_or_none(arr: np.ndarray) -> List[Optional[float]]:
    return [float(v) if np.isfinite(v) else None for v in arr]


@app.get("/")
def health_check():
    return {"status": "ok", "service": "PEAR Service"}


@app.post("/solve")
def solve_endpoint(request: InstanceRequest):
    """
    Solve a posted QP and report the primal-dual pair, residuals and active set.
    """
    try:
        inst = build_instance(request)
        inst = inst.with_cost(request.cost)
    except (ValueError, NotPositiveDefinite) as e:
        raise HTTPException(status_code=400, detail=str(e))

    print(f"[SOLVER] Solve request: n={inst.n}, p={inst.p}, m={inst.m}")
    sol = solve(inst)
    result = {
        "status": sol.status.value,
        "z": _finite_or_none(sol.z),
        "y": _finite_or_none(sol.y),
        "iterations": sol.iterations,
        "polished": sol.polished,
        "residuals": kkt_report(inst, sol),
    }
    if sol.status is SolveStatus.SOLVED:
        act = detect_active(inst, sol)
        result["active"] = {"lower": list(act.lower), "upper": list(act.upper), "pinned": list(act.pinned)}
        result["active_rows"] = assemble_jacobian(inst, act).k
    return result


@app.post("/gradient")
def gradient_endpoint(request: GradientRequest):
    """PEAR regret gradient w.r.t. the posted (predicted) cost."""
    try:
        inst = build_instance(request)
        if len(request.true_cost) != inst.n:
            raise ValueError("true_cost length does not match cost")
    except (ValueError, NotPositiveDefinite) as e:
        raise HTTPException(status_code=400, detail=str(e))

    try:
        g = grad_pear(inst, request.cost, request.true_cost, beta=request.beta)
    except (SolverError, SchurSingular) as e:
        raise HTTPException(status_code=500, detail=str(e))
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {"gradient": g.tolist(), "norm": float(np.linalg.norm(g))}


@app.post("/verify")
def verify_endpoint(request: VerifyRequest):
    """Run the verification suite for a seed."""
    reports = verify_all(request.seed)
    return {
        "passed": all(r.passed for r in reports),
        "reports": [
            {"name": r.name, "instance": r.instance, "max_error": r.max_error,
             "tolerance": r.tolerance, "status": r.status, "skipped": r.skipped}
            for r in reports
        ],
    }


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=8000)
