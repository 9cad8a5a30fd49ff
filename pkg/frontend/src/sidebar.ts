export interface SidebarOptions {
  // model tags the server actually has indexes for (from /health); anything
  // not listed here simply does not appear in the UI
  tags: string[];
  selected: string;
  onSelect: (tag: string) => void;
}

export function renderSidebar(root: HTMLElement, options: SidebarOptions): void {
  root.textContent = '';
  root.classList.add('sidebar');

  const toggle = document.createElement('button');
  toggle.type = 'button';
  toggle.className = 'sidebar-toggle';
  toggle.textContent = 'Models';
  toggle.setAttribute('aria-expanded', 'true');
  toggle.addEventListener('click', () => {
    const collapsed = root.classList.toggle('collapsed');
    toggle.setAttribute('aria-expanded', String(!collapsed));
  });
  root.appendChild(toggle);

  const list = document.createElement('ul');
  list.className = 'model-list';
  for (const tag of options.tags) {
    const item = document.createElement('li');
    const label = document.createElement('label');

    const radio = document.createElement('input');
    radio.type = 'radio';
    radio.name = 'model';
    radio.value = tag;
    radio.checked = tag === options.selected;
    radio.addEventListener('change', () => {
      if (radio.checked) options.onSelect(tag);
    });

    label.appendChild(radio);
    label.appendChild(document.createTextNode(` ${tag}`));
    item.appendChild(label);
    list.appendChild(item);
  }
  root.appendChild(list);
}
