import { ApiClient } from './api.js';
import { createApp } from './app.js';

// API base URL: ?api=http://host:port beats same-origin.
const base = new URLSearchParams(window.location.search).get('api') ?? '';

const root = document.getElementById('app');
if (root) {
  createApp(root, new ApiClient(base));
}
