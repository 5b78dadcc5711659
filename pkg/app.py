from flask import Flask, jsonify
from flask_cors import CORS
from flask_limiter import Limiter
from flask_limiter.util import get_remote_address
import logging

from utils.config import get_settings
from utils.errors import PrivFormError

# Import route blueprints
from api.helpers import error_response
from api.routes_analyze import analyze_bp
from api.routes_simulate import simulate_bp
from api.routes_codesign import codesign_bp
from api.routes_sweep import sweep_bp
from api.routes_graph import graph_bp

logger = logging.getLogger(__name__)


def create_app(overrides=None):
    settings = get_settings()
    app = Flask(__name__)

    # Configuration
    app.config['SECRET_KEY'] = settings.secret_key
    app.config['WORKERS'] = settings.workers
    if overrides:
        app.config.update(overrides)

    # Initialize extensions
    CORS(app, origins=[
        "http://localhost:3000",
        "https://*.vercel.app"
    ])

    limiter = Limiter(
        get_remote_address,
        app=app,
        default_limits=settings.rate_limits,
        storage_uri="memory://",
    )
    app.limiter = limiter

    # Optimization runs are the expensive endpoints
    limiter.limit(settings.codesign_limit)(codesign_bp)
    limiter.limit(settings.codesign_limit)(sweep_bp)

    # Register blueprints
    app.register_blueprint(analyze_bp, url_prefix='/api')
    app.register_blueprint(simulate_bp, url_prefix='/api')
    app.register_blueprint(codesign_bp, url_prefix='/api')
    app.register_blueprint(sweep_bp, url_prefix='/api')
    app.register_blueprint(graph_bp, url_prefix='/api')

    # Health check endpoint
    @app.route('/api/health')
    def health():
        return jsonify({"status": "healthy", "service": "privform"})

    # Error handlers
    @app.errorhandler(PrivFormError)
    def domain_error(e):
        return error_response(e)

    @app.errorhandler(429)
    def ratelimit_handler(e):
        return jsonify({"error": "Rate limit exceeded", "message": "Too many requests"}), 429

    @app.errorhandler(500)
    def internal_error(error):
        return jsonify({"error": "Internal server error"}), 500

    logger.info(f"privform API ready (workers={app.config['WORKERS']})")
    return app


app = create_app()

if __name__ == '__main__':
    logging.basicConfig(level=get_settings().log_level)
    app.run(debug=True, host='0.0.0.0', port=5000)
