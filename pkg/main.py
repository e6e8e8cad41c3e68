# main.py
import traceback

from fastapi import Depends, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from api import experiments
from api import oracle as oracle_api
from execution import registered_executors
from settings import TOOL_VERSION, Settings, configure_logging, get_settings

app = FastAPI(
    title="EGE Harness API",
    description="Expected generalization error and average treatment effects over populations of processing systems",
    version=TOOL_VERSION,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(experiments.router)
app.include_router(oracle_api.router)

print("🔄 EGE Harness API starting...")


@app.on_event("startup")
async def startup():
    configure_logging()
    print(f"✅ Executors registered: {', '.join(registered_executors())}")


@app.get("/")
def root():
    return {"message": "EGE Harness API", "version": TOOL_VERSION}


@app.get("/health")
def health(settings: Settings = Depends(get_settings)):
    return {
        "status": "healthy",
        "version": TOOL_VERSION,
        "executors": registered_executors(),
        "workers": settings.workers,
        "oracle_budget": settings.oracle_budget,
    }


@app.exception_handler(Exception)
async def global_exception_handler(request, exc):
    print(f"❌ Unhandled error: {exc}")
    traceback.print_exc()

    if isinstance(exc, HTTPException):
        raise exc

    return JSONResponse(
        status_code=500,
        content={"detail": f"Internal server error occurred: {str(exc)}"},
    )


if __name__ == "__main__":
    import uvicorn
    print("🚀 Starting EGE Harness API...")
    uvicorn.run(app, host="0.0.0.0", port=8080)
