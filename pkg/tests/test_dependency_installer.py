from dependency_installer import DependencyInstaller, auto_install_dependencies, check_dependencies_only


def test_package_check():
    installer = DependencyInstaller(quiet=True)
    assert installer.check_package('numpy')
    assert not installer.check_package('no_such_module_for_arcs')


def test_everything_the_tests_need_is_installed():
    installed, missing = check_dependencies_only()
    assert missing == []
    assert set(installed) == set(DependencyInstaller.REQUIRED_PACKAGES)


def test_missing_package_is_reported_by_requirement(monkeypatch):
    monkeypatch.setitem(DependencyInstaller.REQUIRED_PACKAGES, 'no_such_module_for_arcs', 'nosuch>=1.0')
    _, missing = check_dependencies_only()
    assert missing == ['nosuch>=1.0']


def test_nothing_to_install_skips_pip():
    installer = DependencyInstaller(quiet=True)
    assert installer.pip_install([])
    assert installer.install_all_dependencies()
    assert installer.get_summary() == {'total_required': len(DependencyInstaller.REQUIRED_PACKAGES),
                                       'installed_packages': [], 'failed_packages': []}
    assert auto_install_dependencies(quiet=True)


def test_failed_pip_run_fails_the_install(monkeypatch):
    monkeypatch.setattr(DependencyInstaller, 'REQUIRED_PACKAGES', {'no_such_module_for_arcs': 'nosuch>=1.0'})
    installer = DependencyInstaller(quiet=True)
    monkeypatch.setattr(installer, 'pip_install', lambda requirements: False)
    assert not installer.install_all_dependencies()
