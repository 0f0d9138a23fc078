int storage_probe(void)
{
#if !defined(CONFIG_USB) && !defined(CONFIG_USB_MODULE)
	/* unreachable: this file is only built with USB */
	return -1;
#endif
	return 0;
}
